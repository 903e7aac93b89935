"""MAX-k-local Hamiltonian instances, energies and generators."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .operators import (
    PureState,
    apply_term,
    check_capacity,
    haar_unitary,
    hermitize,
    is_density,
    reduced_state,
)

TERM_TOL = 1e-9


class ParseError(ValueError):
    """Malformed instance or circuit file; the message names the location."""


@dataclass(frozen=True)
class LocalTerm:
    support: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ValueError(f"support {support} must be strictly increasing")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", hermitize(self.matrix, f"term on {support}"))


@dataclass(frozen=True)
class LocalHamiltonianInstance:
    n: int
    d: int
    k: int
    terms: tuple[LocalTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.d < 2 or self.n < 0 or self.k < 1:
            raise ValueError(f"invalid sizes n={self.n} d={self.d} k={self.k}")
        seen = set()
        for t in self.terms:
            if len(t.support) > self.k:
                raise ValueError(f"term on {t.support} exceeds locality k={self.k}")
            if t.support and (t.support[0] < 0 or t.support[-1] >= self.n):
                raise ValueError(f"term on {t.support} out of range for n={self.n}")
            if t.matrix.shape != (self.d ** len(t.support),) * 2:
                raise ValueError(f"term on {t.support} has shape {t.matrix.shape}")
            if t.support in seen:
                raise ValueError(f"duplicate support {t.support}")
            seen.add(t.support)

    @property
    def dim(self) -> int:
        return self.d**self.n


@dataclass(frozen=True)
class ProductAssignment:
    """One d x d density block per site, stored as an array of shape (n, d, d)."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=complex)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError(f"blocks must have shape (n, d, d), got {b.shape}")
        object.__setattr__(self, "blocks", b)

    @property
    def n(self) -> int:
        return self.blocks.shape[0]

    @property
    def d(self) -> int:
        return self.blocks.shape[1]

    @classmethod
    def from_vectors(cls, vectors: Sequence[np.ndarray]) -> "ProductAssignment":
        vs = [np.asarray(v, dtype=complex) / np.linalg.norm(v) for v in vectors]
        return cls(np.array([np.outer(v, v.conj()) for v in vs]))

    @classmethod
    def maximally_mixed(cls, n: int, d: int) -> "ProductAssignment":
        return cls(np.broadcast_to(np.eye(d) / d, (n, d, d)).copy())

    def is_valid(self, tol: float = 1e-9) -> bool:
        return all(is_density(b, tol) for b in self.blocks)


# ---------------------------------------------------------------------------
# Diagnostics and energies


def validate(inst: LocalHamiltonianInstance, tol: float = TERM_TOL) -> list[str]:
    """Human-readable list of problems; empty when the instance is valid."""
    issues = []
    supports = [t.support for t in inst.terms]
    if len(set(supports)) != len(supports):
        issues.append("duplicate supports")
    for t in inst.terms:
        if any(s < 0 or s >= inst.n for s in t.support):
            issues.append(f"term {t.support}: site index out of range")
        w = np.linalg.eigvalsh(t.matrix)
        if w[0] < -tol:
            issues.append(f"term {t.support}: not PSD (min eigenvalue {w[0]:.3g})")
        if w[-1] > 1 + tol:
            issues.append(f"term {t.support}: norm violation (max eigenvalue {w[-1]:.3g})")
    return issues


def term_expectation(term: LocalTerm, blocks: np.ndarray) -> float:
    """Tr(H_T rho_{i1} (x) ... ) by sequential contraction over the support."""
    m = len(term.support)
    if m == 0:
        return float(term.matrix[0, 0].real)
    d = blocks.shape[1]
    t = term.matrix.reshape([d] * (2 * m))
    for pos, site in enumerate(term.support):
        # contract the first remaining row/column pair of t with rho_site
        t = np.tensordot(t, blocks[site], axes=([0, m - pos], [1, 0]))
        # tensordot appends rho's leftover axes; none remain, so t shrinks by two axes
    return float(np.real(t))


def product_energy(inst: LocalHamiltonianInstance, assign: ProductAssignment) -> float:
    if assign.n != inst.n or assign.d != inst.d:
        raise ValueError(f"assignment shape {assign.blocks.shape} does not match instance n={inst.n} d={inst.d}")
    return float(sum(term_expectation(t, assign.blocks) for t in inst.terms))


def pure_energy(inst: LocalHamiltonianInstance, psi: PureState) -> float:
    check_capacity(inst.dim)
    if psi.dims != (inst.d,) * inst.n:
        raise ValueError(f"state dims {psi.dims} do not match instance")
    total = 0.0
    for t in inst.terms:
        rho = reduced_state(psi.amplitudes, inst.n, inst.d, t.support)
        total += float(np.real(np.sum(t.matrix * rho.T)))
    return total


def apply_hamiltonian(inst: LocalHamiltonianInstance, psi: np.ndarray) -> np.ndarray:
    out = np.zeros_like(psi, dtype=complex)
    for t in inst.terms:
        out += apply_term(t.matrix, t.support, psi, inst.n, inst.d)
    return out


def full_matrix(inst: LocalHamiltonianInstance, cap: int | None = None) -> np.ndarray:
    """Dense d^n matrix of H, built column-free by tensor contractions."""
    check_capacity(inst.dim, cap)
    dim = inst.dim
    h = np.zeros((dim, dim), dtype=complex)
    eye = np.eye(dim, dtype=complex)
    for t in inst.terms:
        m = len(t.support)
        blk = t.matrix.reshape([inst.d] * (2 * m))
        x = eye.reshape([inst.d] * inst.n + [dim])
        y = np.tensordot(blk, x, axes=(list(range(m, 2 * m)), list(t.support)))
        rest = [s for s in range(inst.n) if s not in t.support]
        order = list(t.support) + rest
        perm = list(np.argsort(order)) + [inst.n]
        h += np.transpose(y, perm).reshape(dim, dim)
    return h


def density_value(inst: LocalHamiltonianInstance) -> float:
    """Tr(H I/d^n): the value of the maximally mixed assignment."""
    return float(sum(np.trace(t.matrix).real / inst.d ** len(t.support) for t in inst.terms))


# ---------------------------------------------------------------------------
# Generators


def gen_random_dense(n: int, d: int, k: int, seed: int) -> LocalHamiltonianInstance:
    """One term per k-subset with Haar eigenvectors and eigenvalues uniform in [0, 1]."""
    rng = np.random.default_rng(seed)
    terms = []
    dim = d**k
    for support in itertools.combinations(range(n), k):
        u = haar_unitary(dim, rng)
        lam = rng.uniform(0.0, 1.0, size=dim)
        terms.append(LocalTerm(support, (u * lam) @ u.conj().T))
    return LocalHamiltonianInstance(n, d, k, tuple(terms))


Clause = tuple[Sequence[int], Callable[[tuple[int, ...]], bool]]


def embed_csp(clauses: Iterable[Clause], n: int, d: int = 2, k: int | None = None) -> LocalHamiltonianInstance:
    """Diagonal penalty Hamiltonian: entry 1 on each clause's failing assignments.

    Each clause is ``(variables, predicate)`` where ``predicate`` receives the
    values of ``variables`` in the listed order.  Clauses sharing a variable
    set are summed into one term, so lambda_min(H) is the minimum number of
    unsatisfied clauses.
    """
    clauses = list(clauses)
    arity = max((len(set(v)) for v, _ in clauses), default=1)
    k = arity if k is None else k
    diag: dict[tuple[int, ...], np.ndarray] = {}
    for variables, pred in clauses:
        variables = tuple(int(v) for v in variables)
        support = tuple(sorted(set(variables)))
        if len(support) > k:
            raise ValueError(f"clause on {variables} exceeds arity k={k}")
        pos = {s: i for i, s in enumerate(support)}
        entries = np.zeros(d ** len(support))
        for idx, values in enumerate(itertools.product(range(d), repeat=len(support))):
            if not pred(tuple(values[pos[v]] for v in variables)):
                entries[idx] = 1.0
        diag[support] = diag.get(support, 0.0) + entries
    terms = tuple(LocalTerm(s, np.diag(e).astype(complex)) for s, e in sorted(diag.items()))
    return LocalHamiltonianInstance(n, d, k, terms)


def sat_clause(literals: Sequence[int]) -> Clause:
    """Clause from signed 0-based literals: +(v+1) means x_v, -(v+1) means not x_v."""
    variables = tuple(abs(x) - 1 for x in literals)
    signs = tuple(x > 0 for x in literals)

    def pred(values):
        return any((val == 1) == s for val, s in zip(values, signs))

    return variables, pred


def parse_dimacs(text: str) -> tuple[int, list[list[int]]]:
    """Parse DIMACS CNF text into (variable count, clauses of signed 1-based literals)."""
    nvars = None
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise ParseError(f"line {lineno}: bad problem line {line!r}")
            nvars = int(parts[2])
            continue
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"line {lineno}: bad literal {tok!r}") from None
            if lit == 0:
                if current:
                    clauses.append(current)
                current = []
            else:
                current.append(lit)
    if current:
        clauses.append(current)
    if nvars is None:
        raise ParseError("missing 'p cnf' problem line")
    for c in clauses:
        if any(abs(x) > nvars for x in c):
            raise ParseError(f"clause {c} references a variable above {nvars}")
    return nvars, clauses


def complement(inst: LocalHamiltonianInstance) -> LocalHamiltonianInstance:
    """Per-term I - H_T, turning a penalty Hamiltonian into its maximization form."""
    terms = tuple(LocalTerm(t.support, np.eye(t.matrix.shape[0]) - t.matrix) for t in inst.terms)
    return LocalHamiltonianInstance(inst.n, inst.d, inst.k, terms)


def densify(inst: LocalHamiltonianInstance, extra_sites: int) -> LocalHamiltonianInstance:
    """Append fresh sites carrying |0..0><0..0| on every k-subset of them."""
    if inst.k < 2:
        raise ValueError("densify needs k >= 2")
    k, d = inst.k, inst.d
    proj = np.zeros((d**k, d**k), dtype=complex)
    proj[0, 0] = 1.0
    new = range(inst.n, inst.n + extra_sites)
    terms = list(inst.terms) + [LocalTerm(s, proj) for s in itertools.combinations(new, k)]
    return LocalHamiltonianInstance(inst.n + extra_sites, d, k, tuple(terms))


def single_term_instance(matrix: np.ndarray, support: Sequence[int], n: int, d: int, k: int | None = None):
    support = tuple(support)
    return LocalHamiltonianInstance(n, d, len(support) if k is None else k, (LocalTerm(support, matrix),))


# ---------------------------------------------------------------------------
# JSON serialization


def _fmt(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("non-finite matrix entry")
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def _matrix_json(m: np.ndarray) -> str:
    rows = ("[" + ",".join(f"[{_fmt(z.real)},{_fmt(z.imag)}]" for z in row) + "]" for row in m)
    return "[" + ",".join(rows) + "]"


def serialize(inst: LocalHamiltonianInstance) -> bytes:
    terms = ",".join(
        '{"sites":[' + ",".join(str(s) for s in t.support) + '],"matrix":' + _matrix_json(t.matrix) + "}"
        for t in inst.terms
    )
    return f'{{"n":{inst.n},"d":{inst.d},"k":{inst.k},"terms":[{terms}]}}\n'.encode()


def matrix_from_json(obj, where: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ParseError(f"{where}: expected a non-empty list of rows")
    dim = len(obj)
    out = np.zeros((dim, dim), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != dim:
            raise ParseError(f"{where}[{i}]: expected a row of length {dim}")
        for j, z in enumerate(row):
            if isinstance(z, (int, float)) and not isinstance(z, bool):
                out[i, j] = float(z)
            elif isinstance(z, list) and len(z) == 2 and all(isinstance(v, (int, float)) for v in z):
                out[i, j] = complex(float(z[0]), float(z[1]))
            else:
                raise ParseError(f"{where}[{i}][{j}]: expected [re, im]")
    return out


def load_json(data: bytes | str) -> object:
    if isinstance(data, bytes):
        data = data.decode()
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse(data: bytes | str) -> LocalHamiltonianInstance:
    obj = load_json(data)
    if not isinstance(obj, dict):
        raise ParseError("top level: expected an object")
    for key in ("n", "d", "k", "terms"):
        if key not in obj:
            raise ParseError(f"top level: missing key {key!r}")
    for key in ("n", "d", "k"):
        if not isinstance(obj[key], int) or isinstance(obj[key], bool):
            raise ParseError(f"{key}: expected an integer")
    if not isinstance(obj["terms"], list):
        raise ParseError("terms: expected a list")
    terms = []
    for idx, t in enumerate(obj["terms"]):
        where = f"terms[{idx}]"
        if not isinstance(t, dict) or "sites" not in t or "matrix" not in t:
            raise ParseError(f"{where}: expected an object with 'sites' and 'matrix'")
        sites = t["sites"]
        if not isinstance(sites, list) or not all(isinstance(s, int) for s in sites):
            raise ParseError(f"{where}.sites: expected a list of integers")
        m = matrix_from_json(t["matrix"], f"{where}.matrix")
        try:
            terms.append(LocalTerm(tuple(sites), m))
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None
    try:
        return LocalHamiltonianInstance(obj["n"], obj["d"], obj["k"], tuple(terms))
    except ValueError as exc:
        raise ParseError(f"instance: {exc}") from None
