"""Dense complex Hermitian linear algebra on qudit registers.

Operators are plain ``numpy`` arrays of dtype complex128.  Site 0 is the
most significant tensor factor, so a basis index ``x`` of an ``n``-site
register with local dimension ``d`` has digits ``x = x_0 x_1 ... x_{n-1}``
in base ``d``.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

HERM_TOL = 1e-10
SYMMETRIZE_WARN = 1e-8
DEFAULT_MAX_DIM = 2**22


class CapacityError(RuntimeError):
    """Raised when a dense object would exceed the configured dimension cap."""


def max_dim() -> int:
    """Dimension cap for dense embeddings (``HAMLET_MAX_DIM`` overrides)."""
    env = os.environ.get("HAMLET_MAX_DIM")
    if env:
        return int(env)
    return DEFAULT_MAX_DIM


def check_capacity(dim: int, cap: int | None = None) -> None:
    cap = max_dim() if cap is None else cap
    if dim > cap:
        raise CapacityError(f"dimension {dim} exceeds capacity cap {cap}")


def hermitize(a, name: str = "operator") -> np.ndarray:
    """Return ``(a + a^dagger)/2`` as complex128, warning on large asymmetry."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    asym = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if asym > SYMMETRIZE_WARN:
        warnings.warn(f"{name} asymmetric by {asym:.3g}; symmetrizing", stacklevel=2)
    return (a + a.conj().T) / 2


def is_hermitian(a: np.ndarray, tol: float = HERM_TOL) -> bool:
    return a.shape[0] == a.shape[1] and bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def is_density(rho: np.ndarray, tol: float = 1e-9) -> bool:
    """PSD and unit-trace check with absolute tolerance ``tol``."""
    if not is_hermitian(rho, max(tol, HERM_TOL)):
        return False
    return abs(np.trace(rho).real - 1.0) <= tol and np.linalg.eigvalsh(rho)[0] >= -tol


# ---------------------------------------------------------------------------
# Orthogonal Hermitian basis


@dataclass(frozen=True)
class HermBasis:
    """d^2 Hermitian matrices with Tr(s_i s_j) = 2 delta_ij.

    Order: symmetric off-diagonal U_pq, antisymmetric V_pq (p < q,
    lexicographic), diagonal W_r for r = 1..d-1, then sqrt(2/d) I.
    """

    d: int
    elements: np.ndarray  # shape (d*d, d, d)

    @property
    def identity_index(self) -> int:
        return self.d * self.d - 1

    def coords(self, rho: np.ndarray) -> np.ndarray:
        """Expectations Tr(s_j rho) for every basis element (real vector)."""
        return np.einsum("jab,ba->j", self.elements, rho).real

    def coords_batch(self, blocks: np.ndarray) -> np.ndarray:
        """Tr(s_j rho_i) for a stack of blocks; shape (n, d^2)."""
        return np.einsum("jab,iba->ij", self.elements, blocks).real

    def expand(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of coefficient extraction: sum_j c_j s_j."""
        return np.tensordot(np.asarray(coeffs, dtype=complex), self.elements, axes=1)


@lru_cache(maxsize=None)
def build_herm_basis(d: int) -> HermBasis:
    if d < 2:
        raise ValueError(f"invalid dimension d={d}; need d >= 2")
    pairs = [(p, q) for p in range(d) for q in range(p + 1, d)]
    mats = []
    for p, q in pairs:
        u = np.zeros((d, d), dtype=complex)
        u[p, q] = u[q, p] = 1.0
        mats.append(u)
    for p, q in pairs:
        v = np.zeros((d, d), dtype=complex)
        v[p, q] = -1j
        v[q, p] = 1j
        mats.append(v)
    for r in range(1, d):
        diag = np.zeros(d)
        diag[:r] = 1.0
        diag[r] = -r
        mats.append(np.sqrt(2.0 / (r * (r + 1))) * np.diag(diag).astype(complex))
    mats.append(np.sqrt(2.0 / d) * np.eye(d, dtype=complex))
    elements = np.array(mats)
    elements.setflags(write=False)
    return HermBasis(d=d, elements=elements)


# ---------------------------------------------------------------------------
# Tensor products and embeddings


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the given operators (or vectors), left to right."""
    out = np.ones((1, 1), dtype=complex) if ops and np.ndim(ops[0]) == 2 else np.ones(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def _check_support(support: Sequence[int], n: int) -> tuple[int, ...]:
    support = tuple(int(s) for s in support)
    if len(set(support)) != len(support):
        raise ValueError(f"support {support} has repeated sites")
    if any(s < 0 or s >= n for s in support):
        raise ValueError(f"support {support} out of range for n={n}")
    return support


def embed_term(term: np.ndarray, support: Sequence[int], n: int, d: int, cap: int | None = None) -> np.ndarray:
    """Dense d^n operator acting as ``term`` on ``support`` and identity elsewhere.

    ``support`` lists the sites that the tensor factors of ``term`` act on,
    in the factor order of ``term``.
    """
    support = _check_support(support, n)
    m = len(support)
    if term.shape != (d**m, d**m):
        raise ValueError(f"term shape {term.shape} does not match d^{m}")
    check_capacity(d**n, cap)
    rest = [s for s in range(n) if s not in support]
    full = np.kron(term, np.eye(d ** len(rest), dtype=complex))
    # axes of `full` are (support..., rest...) for rows then columns
    order = list(support) + rest
    perm = np.argsort(order)
    full = full.reshape([d] * (2 * n))
    full = full.transpose(list(perm) + [n + p for p in perm])
    return full.reshape(d**n, d**n)


def apply_term(term: np.ndarray, support: Sequence[int], psi: np.ndarray, n: int, d: int) -> np.ndarray:
    """Compute (term on support) |psi> without building the full operator."""
    m = len(support)
    t = term.reshape([d] * (2 * m))
    x = psi.reshape([d] * n)
    y = np.tensordot(t, x, axes=(list(range(m, 2 * m)), list(support)))
    # result axes: (support outputs..., remaining sites in order)
    rest = [s for s in range(n) if s not in support]
    order = list(support) + rest
    return np.transpose(y, np.argsort(order)).reshape(-1)


def partial_trace(state: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not in ``keep``; kept subsystems stay in ``keep`` order."""
    dims = [int(x) for x in dims]
    total = int(np.prod(dims))
    if state.shape != (total, total):
        raise ValueError(f"state shape {state.shape} inconsistent with dims {dims}")
    keep = list(keep)
    n = len(dims)
    if any(k < 0 or k >= n for k in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"invalid keep set {keep} for {n} subsystems")
    traced = [i for i in range(n) if i not in keep]
    t = state.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise ValueError("too many subsystems for partial_trace")
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] for i in range(n)]
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    r = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return r.reshape(dk, dk)


def reduced_state(psi: np.ndarray, n: int, d: int, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of a pure state on ``keep`` (in that order)."""
    keep = list(keep)
    x = psi.reshape([d] * n)
    rest = [s for s in range(n) if s not in keep]
    x = np.transpose(x, keep + rest).reshape(d ** len(keep), -1)
    return x @ x.conj().T


def eig_herm(op: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending and unitary eigenvector columns of a Hermitian matrix."""
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square matrix, got {op.shape}")
    if not is_hermitian(op, tol):
        raise ValueError("eig_herm requires a Hermitian matrix")
    return np.linalg.eigh((op + op.conj().T) / 2)


# ---------------------------------------------------------------------------
# Pure states


@dataclass(frozen=True)
class PureState:
    dims: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != int(np.prod(self.dims)):
            raise ValueError(f"amplitude length {amps.size} does not match dims {self.dims}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state norm {norm} differs from 1")
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, dims: Sequence[int], amplitudes) -> "PureState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(tuple(dims), amps / np.linalg.norm(amps))

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> "PureState":
        return cls.normalized([len(v) for v in vectors], tensor(*[np.asarray(v, dtype=complex) for v in vectors]))

    @property
    def n(self) -> int:
        return len(self.dims)

    def density(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


def random_pure_state(dims: Sequence[int], rng: np.random.Generator) -> PureState:
    size = int(np.prod(dims))
    v = rng.normal(size=size) + 1j * rng.normal(size=size)
    return PureState.normalized(dims, v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random density matrix from the induced (Hilbert-Schmidt for rank=d) measure."""
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def schmidt_decompose(psi: PureState, cut: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Schmidt decomposition across the first ``cut`` subsystems.

    Returns ``(alpha, left, right)`` with ``left[:, i]`` and ``right[:, i]`` the
    Schmidt vectors, so ``psi = sum_i alpha_i left[:, i] (x) right[:, i]``.
    """
    if not 0 < cut < psi.n:
        raise ValueError(f"cut {cut} must split {psi.n} subsystems")
    da = int(np.prod(psi.dims[:cut]))
    mat = psi.amplitudes.reshape(da, -1)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    return s, u, vh.T
