"""Linearization of the degree-k objective into a small-block SDP, and its solver.

Block parametrisation
    rho_i = I/d + 1/2 sum_m x_{im} s_m over the d^2 - 1 traceless basis
    elements, so Tr(rho_i) = 1 holds identically and Tr(s_m rho_i) = x_{im}.
    The identity label contributes the constant sqrt(2/d).

The conic program is handed to Clarabel.  Optimality is certified
independently of the solver: for any multipliers lam >= 0 on the linear
rows a_r . x <= h_r, weak duality gives

    OPT <= c0 + lam . h + sum_i lambda_max( sum_m (c - A^T lam)_{im} s_m ),

and the gap between this bound and the value of the projected solution is
reported.  The same bound with c = 0 certifies infeasibility when negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import clarabel
import numpy as np
import scipy.sparse as sp

from .degree import CoordinateTensor, Estimator, SampleSet, SamplerParams, t_full
from .instance import ProductAssignment
from .operators import build_herm_basis

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"


@dataclass
class LinearFunctional:
    """sum_{i,j} coeffs[i, j] Tr(s_j rho_i) + const."""

    coeffs: np.ndarray  # shape (n, d^2)
    const: float = 0.0

    def value(self, blocks: np.ndarray) -> float:
        d = blocks.shape[1]
        tau = build_herm_basis(d).coords_batch(np.asarray(blocks, dtype=complex))
        return float(np.sum(self.coeffs * tau) + self.const)

    def key(self) -> bytes:
        return self.coeffs.tobytes() + np.float64(self.const).tobytes()

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


@dataclass
class LinearizedConstraint:
    functional: LinearFunctional
    lower: float
    upper: float

    def violation(self, blocks: np.ndarray) -> float:
        v = self.functional.value(blocks)
        return max(self.lower - v, v - self.upper, 0.0)


@dataclass
class SdpModel:
    n: int
    d: int
    objective: LinearFunctional
    constraints: list[LinearizedConstraint] = field(default_factory=list)
    sense: str = "max"

    def add(self, con: LinearizedConstraint) -> None:
        self.constraints.append(con)

    def deduplicated(self) -> "SdpModel":
        """Merge constraints with identical functionals into their tightest interval."""
        merged: dict[bytes, LinearizedConstraint] = {}
        for c in self.constraints:
            key = c.functional.key()
            if key in merged:
                m = merged[key]
                m.lower, m.upper = max(m.lower, c.lower), min(m.upper, c.upper)
            else:
                merged[key] = LinearizedConstraint(c.functional, c.lower, c.upper)
        return SdpModel(self.n, self.d, self.objective, list(merged.values()), self.sense)

    def dump(self) -> str:
        """Plain-text listing; see README for the format."""
        lines = ["hamlet-sdp 1", f"sense {self.sense}", f"blocks {self.n} {self.d}"]
        lines.append(f"objective {len(np.flatnonzero(self.objective.coeffs))} {float(self.objective.const)!r}")
        for (i, j), v in np.ndenumerate(self.objective.coeffs):
            if v:
                lines.append(f"{i} {j} {float(v)!r}")
        lines.append(f"constraints {len(self.constraints)}")
        for c in self.constraints:
            nz = np.flatnonzero(c.functional.coeffs)
            lines.append(f"constraint {len(nz)} {float(c.functional.const)!r} {float(c.lower)!r} {float(c.upper)!r}")
            for (i, j), v in np.ndenumerate(c.functional.coeffs):
                if v:
                    lines.append(f"{i} {j} {float(v)!r}")
        return "\n".join(lines) + "\n"


@dataclass
class SdpSolution:
    assignment: ProductAssignment | None
    objective: float
    status: str
    gap: float = np.inf
    bound: float = np.inf
    residual: float = np.inf
    projection: float = 0.0
    message: str = ""


# ---------------------------------------------------------------------------
# Linearization


class Linearizer:
    """Builds the SDP for one instance; exact base-level functionals are cached."""

    def __init__(self, tensor: CoordinateTensor, params: SamplerParams):
        self.tensor = tensor
        self.params = params
        self._exact: dict[tuple, LinearFunctional] = {}

    def exact_functional(self, sites: tuple[int, ...], labels: tuple[int, ...]) -> LinearFunctional:
        """The level-1 form with the given k-1 outer sites/labels, as a linear functional."""
        key = (sites, labels)
        if key not in self._exact:
            ten = self.tensor
            c = np.zeros((ten.n, ten.dsq))
            for i in ten.children.get(sites, ()):
                c[i] = ten.coeffs[sites + (i,)][labels]
            self._exact[key] = LinearFunctional(c)
        return self._exact[key]

    def build(self, sample: SampleSet | None, sense: str = "max") -> SdpModel:
        ten, params = self.tensor, self.params
        k, n, dsq = ten.k, ten.n, ten.dsq
        model = SdpModel(n, ten.d, LinearFunctional(np.zeros((n, dsq))), [], sense)
        if k == 1:
            model.objective = self.exact_functional((), ())
            return model
        est = Estimator(ten, sample, params)
        Delta = params.Delta

        def recurse(sites, labels, b, eps, lower, upper):
            if b == 1:
                model.add(LinearizedConstraint(self.exact_functional(sites, labels), lower, upper))
                return None
            eps_next = eps - params.scale * Delta ** (b - 1)
            width = eps_next * n ** (b - 1)
            c = np.zeros((n, dsq))
            for i in ten.children.get(sites, ()):
                table = est.table(sites + (i,))[labels]
                c[i] = table
                for j in range(dsq):
                    e = float(table[j])
                    recurse(sites + (i,), labels + (j,), b - 1, eps_next, e - width, e + width)
            f = LinearFunctional(c)
            if lower is None:
                return f
            margin = eps_next * dsq * n**b
            model.add(LinearizedConstraint(f, lower - margin, upper + margin))
            return None

        model.objective = recurse((), (), k, params.eps(k), None, None)
        return model.deduplicated()


def linearize(tensor: CoordinateTensor, sample: SampleSet | None, params: SamplerParams, sense: str = "max") -> SdpModel:
    return Linearizer(tensor, params).build(sample, sense)


# ---------------------------------------------------------------------------
# Solver


def _svec_upper(m: np.ndarray) -> np.ndarray:
    """Upper triangle, column-major, off-diagonals scaled by sqrt 2 (Clarabel PSD order)."""
    dim = m.shape[0]
    out = []
    for col in range(dim):
        for row in range(col + 1):
            out.append(m[row, col] * (1.0 if row == col else np.sqrt(2.0)))
    return np.array(out)


def _real_embed(h: np.ndarray) -> np.ndarray:
    return np.block([[h.real, -h.imag], [h.imag, h.real]])


class _Layout:
    """Shared linear algebra for a given (n, d)."""

    def __init__(self, n: int, d: int):
        self.n, self.d = n, d
        basis = build_herm_basis(d).elements
        self.traceless = basis[:-1]
        self.m = d * d - 1
        self.id_value = np.sqrt(2.0 / d)
        m0 = _svec_upper(_real_embed(np.eye(d) / d))
        cols = np.array([_svec_upper(_real_embed(0.5 * s)) for s in self.traceless]).T
        self.block_rows = len(m0)
        self.b_psd = np.tile(m0, n)
        self.a_psd = sp.block_diag([sp.csc_matrix(-cols)] * n, format="csc") if n else sp.csc_matrix((0, 0))

    def split(self, f: LinearFunctional) -> tuple[np.ndarray, float]:
        """(coefficient vector over x, constant) of a functional."""
        return f.coeffs[:, :-1].reshape(-1), float(f.const + self.id_value * f.coeffs[:, -1].sum())

    def blocks(self, x: np.ndarray) -> np.ndarray:
        xs = x.reshape(self.n, self.m)
        return np.eye(self.d) / self.d + 0.5 * np.tensordot(xs, self.traceless, axes=1)

    def lambda_max_sum(self, w: np.ndarray) -> float:
        mats = np.tensordot(w.reshape(self.n, self.m), self.traceless, axes=1)
        return float(np.linalg.eigvalsh(mats)[:, -1].sum()) if self.n else 0.0


def project_blocks(blocks: np.ndarray) -> tuple[np.ndarray, float]:
    """Clip negative eigenvalues, renormalise traces; return blocks and max Frobenius change."""
    w, v = np.linalg.eigh(blocks)
    w = np.clip(w, 0.0, None)
    w = w / w.sum(axis=1, keepdims=True)
    out = np.einsum("nij,nj,nkj->nik", v, w, v.conj())
    change = float(np.max(np.linalg.norm(out - blocks, axis=(1, 2)))) if len(blocks) else 0.0
    return out, change


def solve_sdp(
    model: SdpModel,
    eps_sdp: float = 1e-6,
    feas_tol: float = 1e-6,
    eq_slack: float = 0.0,
    max_iter: int = 200,
) -> SdpSolution:
    """Solve max (or min) of the objective over trace-1 PSD blocks subject to the constraints."""
    n, d = model.n, model.d
    lay = _Layout(n, d)
    sign = 1.0 if model.sense == "max" else -1.0
    c_vec, c0 = lay.split(model.objective)

    rows, rhs = [], []
    bounds = []
    for con in model.constraints:
        lo, hi = con.lower, con.upper
        if lo == hi:
            lo, hi = lo - eq_slack, hi + eq_slack
        bounds.append((lo, hi))
        a, a0 = lay.split(con.functional)
        if not np.any(a):
            if a0 < lo - feas_tol or a0 > hi + feas_tol:
                return SdpSolution(None, np.nan, INFEASIBLE, message="constant constraint violated")
            continue
        if np.isfinite(hi):
            rows.append(a)
            rhs.append(hi - a0)
        if np.isfinite(lo):
            rows.append(-a)
            rhs.append(a0 - lo)
    G = np.array(rows).reshape(len(rows), n * lay.m)
    h = np.array(rhs)

    A = sp.vstack([sp.csc_matrix(G), lay.a_psd], format="csc")
    b = np.concatenate([h, lay.b_psd])
    cones = []
    if len(h):
        cones.append(clarabel.NonnegativeConeT(len(h)))
    cones += [clarabel.PSDTriangleConeT(2 * d)] * n
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    settings.tol_ktratio = 1e-8
    nvar = n * lay.m
    solver = clarabel.DefaultSolver(sp.csc_matrix((nvar, nvar)), -sign * c_vec, A, b, cones, settings)
    res = solver.solve()
    status = str(res.status)
    lam = np.maximum(np.array(res.z[: len(h)]), 0.0)

    def bound(lam_):
        """Certified upper bound on max sign*objective."""
        w = sign * c_vec - (G.T @ lam_ if len(h) else 0.0)
        return sign * c0 + float(lam_ @ h) + lay.lambda_max_sum(w)

    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        # Farkas ray: lam >= 0 with lam.h + sum lambda_max(-A^T lam) < 0
        ray = lam / max(np.max(lam), 1e-300)
        farkas = float(ray @ h) + lay.lambda_max_sum(-(G.T @ ray))
        msg = f"certificate {farkas:.3g}" if farkas < 0 else "solver-reported"
        return SdpSolution(None, np.nan, INFEASIBLE, message=msg)

    x = np.array(res.x)
    blocks, change = project_blocks(lay.blocks(x))
    assign = ProductAssignment(blocks)
    value = model.objective.value(blocks)
    residual = max((max(lo - v, v - hi, 0.0) for (lo, hi), v in
                    zip(bounds, (c.functional.value(blocks) for c in model.constraints))), default=0.0)
    upper = bound(lam)
    gap = upper - sign * value
    if status not in ("Solved", "AlmostSolved"):
        st, msg = MAX_ITER, f"solver status {status}"
    elif change > 1e-6:
        st, msg = MAX_ITER, f"projection moved blocks by {change:.3g}"
    elif residual > feas_tol:
        st, msg = MAX_ITER, f"residual {residual:.3g} above feas_tol"
    elif gap > eps_sdp:
        st, msg = MAX_ITER, f"certified gap {gap:.3g} above eps_sdp"
    else:
        st, msg = OPTIMAL, ""
    return SdpSolution(assign, value, st, gap=gap, bound=sign * upper, residual=residual, projection=change, message=msg)


def evaluate_on_p1(tensor: CoordinateTensor, solution: SdpSolution) -> float:
    """Degree-k objective (the product energy) at the solution blocks."""
    return t_full(tensor, solution.assignment)
