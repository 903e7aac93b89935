"""Circuit-to-Hamiltonian construction with a unary clock.

Register layout (qubits, most significant first): proof qubits, ancilla
qubits, then L clock qubits.  Time t is encoded as |1^t 0^(L-t)>.  Clock
qubits are numbered 1..L in the formulas below and sit at register index
``n_proof + n_ancilla + j - 1``.  The output qubit is proof qubit 0; a run
accepts when measuring it after the circuit gives 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instance import LocalHamiltonianInstance, LocalTerm, ParseError, load_json, matrix_from_json
from .operators import PureState, apply_term, check_capacity, embed_term, haar_unitary

P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
RAISE = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|


@dataclass(frozen=True)
class Gate:
    targets: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        if len(targets) not in (1, 2) or len(set(targets)) != len(targets):
            raise ValueError(f"gate targets {targets} must be 1 or 2 distinct qubits")
        u = np.asarray(self.matrix, dtype=complex)
        if u.shape != (2 ** len(targets),) * 2:
            raise ValueError(f"gate matrix shape {u.shape} does not match targets {targets}")
        if np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > 1e-10:
            raise ValueError("gate matrix is not unitary")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "matrix", u)


@dataclass(frozen=True)
class VerifierCircuit:
    n_proof: int
    n_ancilla: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_proof < 1:
            raise ValueError("need at least one proof qubit (the output qubit)")
        if not self.gates:
            raise ValueError("circuit needs at least one gate")
        for g in self.gates:
            if any(t < 0 or t >= self.width for t in g.targets):
                raise ValueError(f"gate targets {g.targets} out of range")

    @property
    def width(self) -> int:
        return self.n_proof + self.n_ancilla

    @property
    def L(self) -> int:
        return len(self.gates)

    @property
    def n_qubits(self) -> int:
        return self.width + self.L

    def clock_site(self, j: int) -> int:
        return self.width + j - 1

    def unitary(self) -> np.ndarray:
        """Full circuit unitary V_L ... V_1 on proof and ancilla qubits."""
        dim = 2**self.width
        v = np.eye(dim, dtype=complex)
        for g in self.gates:
            v = embed_term(g.matrix, g.targets, self.width, 2) @ v
        return v


@dataclass(frozen=True)
class ClockHamiltonian:
    circuit: VerifierCircuit
    h_in: np.ndarray
    h_out: np.ndarray
    h_prop: np.ndarray
    h_stab: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.h_in + self.h_out + self.h_prop + self.h_stab

    @property
    def kernel_part(self) -> np.ndarray:
        return self.h_in + self.h_prop + self.h_stab


# ---------------------------------------------------------------------------
# Local pieces (support, matrix) before embedding


def _clock_projector(circ: VerifierCircuit, t: int) -> list[tuple[int, np.ndarray]]:
    """Factors (site, 2x2) realising |t><t| on the unary clock."""
    L = circ.L
    if t == 0:
        return [(circ.clock_site(1), P0)]
    if t == L:
        return [(circ.clock_site(L), P1)]
    return [(circ.clock_site(t), P1), (circ.clock_site(t + 1), P0)]


def _clock_step(circ: VerifierCircuit, j: int) -> list[tuple[int, np.ndarray]]:
    """Factors realising |j><j-1| on the unary clock (1 <= j <= L)."""
    L = circ.L
    out = []
    if j > 1:
        out.append((circ.clock_site(j - 1), P1))
    out.append((circ.clock_site(j), RAISE))
    if j < L:
        out.append((circ.clock_site(j + 1), P0))
    return out


def _assemble(factors: list[tuple[int, np.ndarray]], support: Sequence[int]) -> np.ndarray:
    """Tensor the factors onto ``support`` (sorted), identity where absent."""
    by_site: dict[int, np.ndarray] = {}
    for site, m in factors:
        by_site[site] = by_site[site] @ m if site in by_site else m
    out = np.ones((1, 1), dtype=complex)
    for s in support:
        out = np.kron(out, by_site.get(s, np.eye(2, dtype=complex)))
    return out


def _gate_on(support: Sequence[int], gate: Gate) -> np.ndarray:
    """Gate matrix re-indexed onto the first len(gate.targets) entries of ``support``-order."""
    m = len(support)
    pos = [support.index(t) for t in gate.targets]
    return embed_term(gate.matrix, pos, m, 2)


def local_terms(circ: VerifierCircuit) -> dict[str, list[tuple[tuple[int, ...], np.ndarray]]]:
    """Raw local terms of each part as (sorted support, matrix) pairs."""
    parts: dict[str, list] = {"in": [], "out": [], "prop": [], "stab": []}
    L = circ.L
    c1 = circ.clock_site(1)
    for a in range(circ.n_proof, circ.width):
        support = (a, c1)
        parts["in"].append((support, _assemble([(a, P1), (c1, P0)], support)))
    support = tuple(sorted({0, circ.clock_site(L)}))
    parts["out"].append((support, _assemble([(0, P0), (circ.clock_site(L), P1)], support)))
    for j, gate in enumerate(circ.gates, start=1):
        clock_sites = {circ.clock_site(i) for i in (j - 1, j, j + 1) if 1 <= i <= L}
        support = tuple(sorted(set(gate.targets) | clock_sites))
        u = _gate_on(list(support), gate)
        fwd = u @ _assemble(_clock_step(circ, j), support)
        diag = _assemble(_clock_projector(circ, j), support) + _assemble(_clock_projector(circ, j - 1), support)
        h = 0.5 * diag - 0.5 * fwd - 0.5 * fwd.conj().T
        parts["prop"].append((support, h))
    for i in range(1, L):
        support = (circ.clock_site(i), circ.clock_site(i + 1))
        parts["stab"].append((support, _assemble([(support[0], P0), (support[1], P1)], support)))
    return parts


def build_clock_hamiltonian(circ: VerifierCircuit, cap: int | None = None) -> ClockHamiltonian:
    n = circ.n_qubits
    check_capacity(2**n, cap)
    dense = {}
    for name, terms in local_terms(circ).items():
        h = np.zeros((2**n, 2**n), dtype=complex)
        for support, m in terms:
            h += embed_term(m, support, n, 2, cap)
        dense[name] = h
    return ClockHamiltonian(circ, dense["in"], dense["out"], dense["prop"], dense["stab"])


def unary(t: int, L: int) -> np.ndarray:
    v = np.zeros(2**L, dtype=complex)
    v[int("1" * t + "0" * (L - t), 2) if L else 0] = 1.0
    return v


def history_state(circ: VerifierCircuit, proof: PureState) -> PureState:
    if proof.dims != (2,) * circ.n_proof:
        raise ValueError(f"proof dims {proof.dims} do not match {circ.n_proof} qubits")
    check_capacity(2**circ.n_qubits)
    anc = np.zeros(2**circ.n_ancilla, dtype=complex)
    anc[0] = 1.0
    state = np.kron(proof.amplitudes, anc)
    total = np.kron(state, unary(0, circ.L))
    for t, gate in enumerate(circ.gates, start=1):
        state = apply_term(gate.matrix, gate.targets, state, circ.width, 2)
        total = total + np.kron(state, unary(t, circ.L))
    return PureState((2,) * circ.n_qubits, total / np.sqrt(circ.L + 1))


def acceptance_operator(circ: VerifierCircuit) -> np.ndarray:
    """Operator Q on the proof space with <xi|Q|xi> = Pr[output qubit reads 1]."""
    v = circ.unitary()
    width = circ.width
    out1 = embed_term(P1, [0], width, 2)
    q = v.conj().T @ out1 @ v
    # restrict to ancilla |0...0>
    idx = np.arange(2**circ.n_proof) * 2**circ.n_ancilla
    return q[np.ix_(idx, idx)]


def max_acceptance(circ: VerifierCircuit) -> tuple[float, PureState]:
    w, vecs = np.linalg.eigh(acceptance_operator(circ))
    return float(w[-1]), PureState.normalized((2,) * circ.n_proof, vecs[:, -1])


def expectation(op: np.ndarray, psi: PureState) -> float:
    return float(np.real(np.vdot(psi.amplitudes, op @ psi.amplitudes)))


def check_kitaev_bounds(circ: VerifierCircuit, proof: PureState | None = None, tol: float = 1e-9) -> dict:
    """Numeric YES/NO checks for the clock Hamiltonian of ``circ``.

    With ``proof`` omitted the best proof (top eigenvector of the acceptance
    operator) is used, so ``acceptance`` is the maximum over proofs.
    """
    ham = build_clock_hamiltonian(circ)
    acc_max, best = max_acceptance(circ)
    if proof is None:
        proof, acc = best, acc_max
    else:
        acc = expectation(acceptance_operator(circ), proof)
    eps = 1.0 - acc
    hist = history_state(circ, proof)
    total = ham.total
    lam_min = float(np.linalg.eigvalsh(total)[0])
    energy = expectation(total, hist)
    threshold = eps / (circ.L + 1)
    return {
        "L": circ.L,
        "acceptance": acc,
        "max_acceptance": acc_max,
        "eps": eps,
        "yes_threshold": threshold,
        "kernel_energy": expectation(ham.kernel_part, hist),
        "history_energy": energy,
        "lambda_min": lam_min,
        "yes_ok": energy <= threshold + tol and lam_min <= threshold + tol,
        "no_positive": lam_min > tol,
    }


def clock_instance(circ: VerifierCircuit) -> tuple[LocalHamiltonianInstance, float]:
    """Emit the total clock Hamiltonian as a local instance.

    Raw terms sharing a support are summed.  If a merged term has largest
    eigenvalue above 1, all terms are multiplied by ``scale = 1/max`` so the
    instance satisfies 0 <= H_T <= I; the returned ``scale`` maps spectra
    back (H_instance = scale * H_total).
    """
    merged: dict[tuple[int, ...], np.ndarray] = {}
    for terms in local_terms(circ).values():
        for support, m in terms:
            merged[support] = merged[support] + m if support in merged else m.copy()
    top = max(float(np.linalg.eigvalsh(m)[-1]) for m in merged.values())
    scale = 1.0 / top if top > 1.0 + 1e-12 else 1.0
    k = max(len(s) for s in merged)
    terms = tuple(LocalTerm(s, scale * m) for s, m in sorted(merged.items()))
    return LocalHamiltonianInstance(circ.n_qubits, 2, k, terms), scale


# ---------------------------------------------------------------------------
# Circuits: construction helpers and JSON


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def always_reject_circuit(extra_identities: int = 0) -> VerifierCircuit:
    """Swap the output qubit with a fresh |0> ancilla, so every proof is rejected."""
    gates = [Gate((0, 1), SWAP)] + [Gate((1,), np.eye(2))] * extra_identities
    return VerifierCircuit(1, 1, tuple(gates))


def random_circuit(n_proof: int, n_ancilla: int, L: int, rng: np.random.Generator) -> VerifierCircuit:
    width = n_proof + n_ancilla
    gates = []
    for _ in range(L):
        if width >= 2 and rng.random() < 0.5:
            targets = tuple(int(x) for x in rng.choice(width, size=2, replace=False))
            gates.append(Gate(targets, haar_unitary(4, rng)))
        else:
            gates.append(Gate((int(rng.integers(width)),), haar_unitary(2, rng)))
    return VerifierCircuit(n_proof, n_ancilla, tuple(gates))


def circuit_to_json(circ: VerifierCircuit) -> str:
    def mat(m):
        return [[[float(z.real), float(z.imag)] for z in row] for row in m]

    return json.dumps(
        {
            "n_proof": circ.n_proof,
            "n_ancilla": circ.n_ancilla,
            "gates": [{"targets": list(g.targets), "matrix": mat(g.matrix)} for g in circ.gates],
        }
    )


def circuit_from_json(data: bytes | str) -> VerifierCircuit:
    obj = load_json(data)
    if not isinstance(obj, dict):
        raise ParseError("top level: expected an object")
    for key in ("n_proof", "n_ancilla", "gates"):
        if key not in obj:
            raise ParseError(f"top level: missing key {key!r}")
    gates = []
    for i, g in enumerate(obj["gates"]):
        where = f"gates[{i}]"
        if not isinstance(g, dict) or "targets" not in g or "matrix" not in g:
            raise ParseError(f"{where}: expected an object with 'targets' and 'matrix'")
        try:
            gates.append(Gate(tuple(g["targets"]), matrix_from_json(g["matrix"], f"{where}.matrix")))
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None
    try:
        return VerifierCircuit(int(obj["n_proof"]), int(obj["n_ancilla"]), tuple(gates))
    except ValueError as exc:
        raise ParseError(f"circuit: {exc}") from None
