"""Product-state approximation: recursive Schmidt decomposition and rounding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instance import LocalHamiltonianInstance, ProductAssignment, product_energy, term_expectation
from .operators import PureState, check_capacity

PRUNE = 1e-12


@dataclass(frozen=True)
class RsdEnsemble:
    """Orthogonal product branches psi = sum_i sqrt(p_i) (x)_s v_i[s]."""

    probabilities: np.ndarray  # shape (branches,)
    vectors: np.ndarray  # shape (branches, n, d), unit local vectors

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    @property
    def d(self) -> int:
        return self.vectors.shape[2]

    def branch_state(self, i: int) -> np.ndarray:
        out = np.ones(1, dtype=complex)
        for v in self.vectors[i]:
            out = np.kron(out, v)
        return out

    def reconstruct(self) -> np.ndarray:
        return sum(np.sqrt(p) * self.branch_state(i) for i, p in enumerate(self.probabilities))

    def reduced(self, sites: Sequence[int]) -> np.ndarray:
        """Reduced density matrix of the mixture sum_i p_i |phi_i><phi_i| on ``sites``."""
        dim = self.d ** len(sites)
        rho = np.zeros((dim, dim), dtype=complex)
        for p, vecs in zip(self.probabilities, self.vectors):
            v = np.ones(1, dtype=complex)
            for s in sites:
                v = np.kron(v, vecs[s])
            rho += p * np.outer(v, v.conj())
        return rho

    def expectation(self, proj: np.ndarray, sites: Sequence[int]) -> float:
        """Tr(Pi rho) for an operator ``proj`` acting on ``sites`` (in that order)."""
        return float(np.real(np.sum(proj * self.reduced(sites).T)))

    def assignment(self, i: int) -> ProductAssignment:
        return ProductAssignment.from_vectors(self.vectors[i])


def recursive_schmidt(psi: PureState, prune: float = PRUNE) -> RsdEnsemble:
    """Schmidt-cut site 0 from the rest, then recurse into each right vector."""
    d = psi.dims[0]
    if any(x != d for x in psi.dims):
        raise ValueError("recursive_schmidt needs equal local dimensions")
    check_capacity(len(psi.amplitudes))
    n = psi.n
    probs: list[float] = []
    vecs: list[np.ndarray] = []

    def recurse(state: np.ndarray, site: int, weight: float, prefix: list[np.ndarray]):
        if site == n - 1:
            probs.append(weight)
            vecs.append(np.array(prefix + [state]))
            return
        u, s, vh = np.linalg.svd(state.reshape(d, -1), full_matrices=False)
        for alpha, left, right in zip(s, u.T, vh):
            p = weight * alpha**2
            if p < prune:
                continue
            recurse(right, site + 1, p, prefix + [left])

    recurse(psi.amplitudes, 0, 1.0, [])
    return RsdEnsemble(np.array(probs), np.array(vecs).reshape(len(probs), n, d))


def mixing_assignment(psi: PureState) -> RsdEnsemble:
    """Classical mixture of the RSD branches; query it with ``expectation``/``reduced``."""
    return recursive_schmidt(psi)


def best_rsd_branch(inst: LocalHamiltonianInstance, psi: PureState) -> tuple[ProductAssignment, float]:
    ens = recursive_schmidt(psi)
    best, best_val = None, -np.inf
    for i in range(len(ens.probabilities)):
        a = ens.assignment(i)
        val = product_energy(inst, a)
        if val > best_val:
            best, best_val = a, val
    return best, float(best_val)


# ---------------------------------------------------------------------------
# Local environments


def environment(inst: LocalHamiltonianInstance, blocks: np.ndarray, site: int) -> tuple[np.ndarray, float]:
    """Return (E, c) with product energy = Tr(E rho_site) + c for the given other blocks."""
    d = inst.d
    env = np.zeros((d, d), dtype=complex)
    const = 0.0
    for t in inst.terms:
        m = len(t.support)
        if site not in t.support:
            const += term_expectation(t, blocks)
            continue
        x = t.matrix.reshape([d] * (2 * m))
        pos = t.support.index(site)
        # contract every other site, keeping row/column axes of `site`
        keep_row, keep_col = pos, m + pos
        letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
        sub_x = list(letters[: 2 * m])
        ops = [x]
        subs = ["".join(sub_x)]
        for q, s in enumerate(t.support):
            if s == site:
                continue
            ops.append(blocks[s])
            subs.append(sub_x[m + q] + sub_x[q])
        out = sub_x[keep_row] + sub_x[keep_col]
        env += np.einsum(",".join(subs) + "->" + out, *ops)
    return env, const


def round_conditional_expectations(
    inst: LocalHamiltonianInstance, assign: ProductAssignment, direction: str = "max"
) -> ProductAssignment:
    """Fix sites in order, each to the best eigenvector of its environment.

    The objective is linear in each block, so replacing a block by the best
    pure state never worsens the value in the chosen direction.
    """
    if direction not in ("max", "min"):
        raise ValueError(f"direction must be 'max' or 'min', got {direction!r}")
    blocks = assign.blocks.copy()
    for s in range(inst.n):
        env, _ = environment(inst, blocks, s)
        w, v = np.linalg.eigh((env + env.conj().T) / 2)
        vec = v[:, -1] if direction == "max" else v[:, 0]
        blocks[s] = np.outer(vec, vec.conj())
    return ProductAssignment(blocks)
