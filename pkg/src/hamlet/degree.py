"""Basis coordinates of an instance, degree-b inner products and the sampled estimator.

Coordinates
    Each term is written as H_T = sum_J r[T][J] s_{j_1} (x) ... (x) s_{j_k}
    with r[T][J] = Tr(H_T s_J) / 2^k.  Terms on fewer than k sites are padded
    with identity factors on extra sites (see ``decompose``), so every stored
    support has exactly k sites.  Axis p of ``r[T]`` belongs to site ``T[p]``.

Levels
    Level k is the outermost sum (axis 0, the smallest site of a support)
    and level 1 the innermost (axis k-1).  A ``DegreeForm`` at level b fixes
    the sites and labels of the k-b outer levels and sums the remaining ones.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .instance import LocalHamiltonianInstance, ProductAssignment
from .operators import CapacityError, build_herm_basis


def term_coefficients(matrix: np.ndarray, d: int, m: int) -> np.ndarray:
    """r[J] = Tr(H s_J)/2^m for an operator on m sites; shape (d^2,)*m."""
    basis = build_herm_basis(d).elements
    t = matrix.reshape([d] * (2 * m))
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows, cols, labs = letters[:m], letters[m : 2 * m], "ABCDEFGHIJKLMNOP"[:m]
    subs = [rows + cols] + [labs[q] + cols[q] + rows[q] for q in range(m)]
    r = np.einsum(",".join(subs) + "->" + labs, t, *([basis] * m))
    return r.real / 2**m


def reconstruct_term(coeffs: np.ndarray, d: int) -> np.ndarray:
    basis = build_herm_basis(d).elements
    m = coeffs.ndim
    out = np.zeros((d**m, d**m), dtype=complex)
    for idx in zip(*np.nonzero(coeffs)):
        op = np.ones((1, 1), dtype=complex)
        for j in idx:
            op = np.kron(op, basis[j])
        out += coeffs[idx] * op
    return out


@dataclass
class CoordinateTensor:
    """Padded per-support coefficient arrays plus a prefix index over supports."""

    n: int
    d: int
    k: int
    coeffs: dict[tuple[int, ...], np.ndarray]
    children: dict[tuple[int, ...], tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.children:
            kids: dict[tuple[int, ...], set[int]] = {}
            for T in self.coeffs:
                for p in range(self.k):
                    kids.setdefault(T[:p], set()).add(T[p])
            self.children = {P: tuple(sorted(s)) for P, s in kids.items()}

    @property
    def dsq(self) -> int:
        return self.d * self.d

    def sub_coeffs(self, sites: tuple[int, ...], labels: tuple[int, ...]) -> dict[tuple[int, ...], np.ndarray]:
        """Coefficient slices r[T][labels, ...] for every support T extending ``sites``."""
        p = len(sites)
        return {T: r[labels] for T, r in self.coeffs.items() if T[:p] == sites}


def decompose(inst: LocalHamiltonianInstance) -> CoordinateTensor:
    """Basis coordinates of every term, padded to exactly k sites.

    A term on m < k sites is extended by identity factors on the smallest
    k-m sites outside its support; since I = sqrt(d/2) s_id, the padded
    coefficients pick up a factor (d/2)^((k-m)/2).  Padded terms landing on
    the same support are summed.
    """
    n, d, k = inst.n, inst.d, inst.k
    if inst.terms and n < k:
        raise ValueError(f"need n >= k to pad supports (n={n}, k={k})")
    idx = d * d - 1
    coeffs: dict[tuple[int, ...], np.ndarray] = {}
    for t in inst.terms:
        m = len(t.support)
        r = term_coefficients(t.matrix, d, m)
        if m < k:
            extra = [s for s in range(n) if s not in t.support][: k - m]
            full = tuple(sorted(t.support + tuple(extra)))
            ident = np.zeros(d * d)
            ident[idx] = np.sqrt(d / 2.0)
            padded = r
            for _ in extra:
                padded = np.multiply.outer(padded, ident)
            order = list(t.support) + extra
            perm = np.argsort(order)
            r = np.transpose(padded, perm)
            support = full
        else:
            support = t.support
        coeffs[support] = coeffs[support] + r if support in coeffs else r
    return CoordinateTensor(n, d, k, coeffs)


@dataclass(frozen=True)
class DegreeForm:
    """t_{a,b}: level b, fixed outer labels for levels k..b+1, fixed outer sites for levels k..a+1.

    With ``a`` omitted the fixed sites are exactly those of the labelled
    levels (a = b).
    """

    tensor: CoordinateTensor
    b: int
    labels: tuple[int, ...] = ()
    sites: tuple[int, ...] = ()

    def __post_init__(self):
        k = self.tensor.k
        if not 1 <= self.b <= k:
            raise ValueError(f"level b={self.b} outside [1, {k}]")
        if len(self.labels) != k - self.b:
            raise ValueError(f"need {k - self.b} fixed labels, got {len(self.labels)}")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("fixed sites must be distinct")

    @property
    def a(self) -> int:
        return self.tensor.k - len(self.sites)

    def child(self, site: int, label: int) -> "DegreeForm":
        return DegreeForm(self.tensor, self.b - 1, self.labels + (label,), self.sites + (site,))


def eval_exact(form: DegreeForm, assign: ProductAssignment | np.ndarray) -> float:
    """Exact nested sum t_{a,b} on the given blocks (need not be density matrices)."""
    blocks = assign.blocks if isinstance(assign, ProductAssignment) else np.asarray(assign)
    ten = form.tensor
    basis = build_herm_basis(ten.d)
    tau = basis.coords_batch(blocks) if np.iscomplexobj(blocks) else basis.coords_batch(blocks.astype(complex))
    k, b = ten.k, form.b
    total = 0.0
    for T, r in ten.sub_coeffs(form.sites, ()).items():
        x = r[form.labels]
        # remaining axes are levels b..1 -> sites T[k-b:]
        for site in T[k - b :]:
            x = x @ tau[site] if x.ndim == 1 else np.tensordot(x, tau[site], axes=([0], [0]))
        total += float(x)
    return total


def t_full(tensor: CoordinateTensor, assign) -> float:
    """Level-k value t_{k,k}, equal to the product energy for trace-1 blocks."""
    return eval_exact(DegreeForm(tensor, tensor.k), assign)


# ---------------------------------------------------------------------------
# delta-net over Hermitian matrices with bounded entries


@dataclass(frozen=True)
class DeltaNet:
    """Per-entry grid: diagonal points in [-1, 1], off-diagonal square lattice on the unit disk."""

    d: int
    delta: float
    diag_grid: np.ndarray
    offdiag_grid: np.ndarray  # complex lattice points
    spacing: float  # lattice spacing of the off-diagonal grid

    @property
    def size(self) -> int:
        """m^{d(d-1)/2} n^d with n diagonal and m off-diagonal points."""
        m, nd = len(self.offdiag_grid), len(self.diag_grid)
        return m ** (self.d * (self.d - 1) // 2) * nd**self.d

    @property
    def grid_radius(self) -> float:
        """Worst-case Frobenius distance from a matrix with entries in range to its rounding."""
        d = self.d
        diag_err = (self.diag_grid[1] - self.diag_grid[0]) / 2 if len(self.diag_grid) > 1 else 1.0
        off_err = self.spacing / np.sqrt(2)
        return float(np.sqrt(d * diag_err**2 + d * (d - 1) * off_err**2))


def build_delta_net(d: int, delta: float) -> DeltaNet:
    if not 0 < delta <= 2:
        raise ValueError(f"delta must lie in (0, 2], got {delta}")
    n_diag = int(math.ceil(2 * d / delta)) + 1
    diag = np.linspace(-1.0, 1.0, n_diag)
    h = delta / (d * np.sqrt(2))
    half = int(math.ceil(1.0 / h))
    axis = np.arange(-half, half + 1) * h
    zs = (axis[:, None] + 1j * axis[None, :]).ravel()
    zs = zs[np.abs(zs) <= 1.0 + h / np.sqrt(2) + 1e-12]
    return DeltaNet(d, float(delta), diag, zs, float(h))


def _round_to(grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.abs(x[..., None] - grid).argmin(axis=-1)
    return grid[idx]


def nearest_net_point(net: DeltaNet, rho: np.ndarray) -> np.ndarray:
    """Nearest net element in Frobenius norm (entrywise rounding; may be non-PSD)."""
    d = net.d
    out = np.zeros((d, d), dtype=complex)
    out[np.diag_indices(d)] = _round_to(net.diag_grid, np.real(np.diag(rho)))
    iu = np.triu_indices(d, 1)
    z = _round_to(net.offdiag_grid, rho[iu])
    out[iu] = z
    out[(iu[1], iu[0])] = np.conj(z)
    return out


def net_points(net: DeltaNet, limit: int = 200_000) -> np.ndarray:
    """Every net element as an array (size, d, d); refuses nets above ``limit``."""
    if net.size > limit:
        raise CapacityError(f"net has {net.size} points, above enumeration limit {limit}")
    d = net.d
    iu = np.triu_indices(d, 1)
    npair = len(iu[0])
    pts = []
    for diag in itertools.product(net.diag_grid, repeat=d):
        for off in itertools.product(net.offdiag_grid, repeat=npair):
            m = np.diag(np.array(diag, dtype=complex))
            m[iu] = off
            m[(iu[1], iu[0])] = np.conj(off)
            pts.append(m)
    return np.array(pts)


def distance_to_states(a: np.ndarray) -> np.ndarray:
    """Frobenius distance from Hermitian matrices to the set of density matrices."""
    a = np.asarray(a)
    w = np.linalg.eigvalsh(a)
    u = -np.sort(-w, axis=-1)
    css = np.cumsum(u, axis=-1)
    ks = np.arange(1, w.shape[-1] + 1)
    ok = u - (css - 1) / ks > 0
    r = w.shape[-1] - 1 - np.argmax(ok[..., ::-1], axis=-1)
    theta = (np.take_along_axis(css, r[..., None], -1)[..., 0] - 1) / (r + 1)
    proj = np.maximum(w - theta[..., None], 0)
    return np.linalg.norm(w - proj, axis=-1)


def covering_subnet(net: DeltaNet, limit: int = 200_000) -> np.ndarray:
    """Net elements that still cover every density matrix within delta.

    Every density matrix lies within r = ``grid_radius`` of its rounding,
    so only grid points within r of the state set matter.  Greedily pick
    centres until each such point is within delta - r of a centre; the
    triangle inequality then gives covering radius delta.
    """
    pts = net_points(net, limit)
    r = net.grid_radius
    if r > net.delta:
        raise ValueError("grid too coarse for the requested radius")
    dist = distance_to_states(pts)
    relevant = pts[dist <= r + 1e-12]
    cands = pts[dist <= net.delta + 1e-12]
    flat_r = relevant.reshape(len(relevant), -1)
    flat_c = cands.reshape(len(cands), -1)
    gap = np.linalg.norm(flat_r[:, None, :] - flat_c[None, :, :], axis=2)
    covers = gap <= net.delta - r + 1e-12
    uncovered = np.ones(len(relevant), dtype=bool)
    chosen = []
    while uncovered.any():
        j = int(np.argmax(covers[uncovered].sum(axis=0)))
        chosen.append(j)
        uncovered &= ~covers[:, j]
    return cands[chosen]


# ---------------------------------------------------------------------------
# Sampling parameters


@dataclass(frozen=True)
class SamplerParams:
    """Error ladder eps_b = C (Delta^b - 1)/(Delta - 1), Delta = sqrt(2) d (1 + delta).

    ``scale`` is C = d^{k/2}(sqrt(f/g) + delta).  In practical mode f and g
    are not chosen; C is fixed by anchoring eps_k to the requested eps'.
    """

    d: int
    k: int
    delta: float
    scale: float
    f: float | None = None
    g: float | None = None
    cutoff_fraction: float = 0.0

    @property
    def Delta(self) -> float:
        return np.sqrt(2.0) * self.d * (1.0 + self.delta)

    def eps(self, b: int) -> float:
        if b <= 0:
            return 0.0
        D = self.Delta
        return self.scale * (D**b - 1.0) / (D - 1.0)

    @property
    def ladder(self) -> list[float]:
        return [self.eps(b) for b in range(1, self.k + 1)]

    @classmethod
    def from_f_g(cls, d: int, k: int, f: float, g: float, delta: float, cutoff_fraction: float = 0.0):
        return cls(d, k, delta, d ** (k / 2) * (np.sqrt(f / g) + delta), f, g, cutoff_fraction)

    @classmethod
    def anchored(cls, d: int, k: int, delta: float, eps_top: float, cutoff_fraction: float = 0.0):
        D = np.sqrt(2.0) * d * (1.0 + delta)
        return cls(d, k, delta, eps_top * (D - 1.0) / (D**k - 1.0), None, None, cutoff_fraction)


def optimum_bound_coefficient(params: SamplerParams) -> float:
    """d(d + sqrt 2) sum_{m=1}^{k-1} (sqrt 2 d)^{k-1-m} eps_m, the P2-vs-P1 gap per n^k."""
    d, k = params.d, params.k
    s = sum((np.sqrt(2) * d) ** (k - 1 - m) * params.eps(m) for m in range(1, k))
    return float(d * (d + np.sqrt(2)) * s)


def _split_delta(d: int, k: int, eps_prime: float) -> float:
    """delta with d^{k/2} delta (Delta^k - 1)/(Delta - 1) = eps'/2 (bisection)."""

    def lhs(delta):
        D = np.sqrt(2.0) * d * (1.0 + delta)
        return d ** (k / 2) * delta * (D**k - 1.0) / (D - 1.0)

    lo, hi = 0.0, 1.0
    while lhs(hi) < eps_prime / 2:
        hi *= 2
        if hi > 1e6:
            raise ValueError("cannot split eps'")
    for _ in range(200):
        mid = (lo + hi) / 2
        if lhs(mid) < eps_prime / 2:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@dataclass(frozen=True)
class TheoryParams:
    eps: float
    eps_sdp: float
    eps_prime: float
    f: float
    g: float
    delta: float
    sample_size: int
    net_size: int
    params: SamplerParams

    @property
    def ladder(self) -> list[float]:
        return self.params.ladder

    @property
    def log10_iterations(self) -> float:
        return self.sample_size * math.log10(self.net_size)

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "eps_sdp": self.eps_sdp,
            "eps_prime": self.eps_prime,
            "f": self.f,
            "g": self.g,
            "delta": self.delta,
            "ladder": self.ladder,
            "sample_size": self.sample_size,
            "net_size": self.net_size,
            "log10_iterations": self.log10_iterations,
        }


def compute_params(eps: float, n: int, d: int, k: int, cutoff_fraction: float | None = None) -> TheoryParams:
    """Parameter arithmetic of the exhaustive-sampling algorithm.

    eps_sdp = eps/10; f is the smallest exponent with 1 - d^{2k} n^{k-f} > 1/2
    (taken as the boundary value plus 1e-9); eps' solves h(eps') + eps_sdp = eps;
    delta and g split eps' evenly between the net and the sampling terms.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n < 2:
        raise ValueError("need n >= 2")
    eps_sdp = eps / 10
    f = k + math.log(2 * d ** (2 * k)) / math.log(n) + 1e-9

    def params_for(eps_prime: float) -> SamplerParams:
        delta = _split_delta(d, k, eps_prime)
        return SamplerParams(d, k, delta, 2 * d ** (k / 2) * delta, cutoff_fraction=0.0)

    if k == 1:
        eps_prime = eps - eps_sdp
    else:
        target = eps - eps_sdp
        lo, hi = 0.0, target
        while optimum_bound_coefficient(params_for(hi)) < target:
            hi *= 2
        for _ in range(200):
            mid = (lo + hi) / 2
            if optimum_bound_coefficient(params_for(mid)) < target:
                lo = mid
            else:
                hi = mid
        eps_prime = (lo + hi) / 2
    base = params_for(eps_prime)
    delta = base.delta
    if delta > 1:
        raise ValueError(f"eps={eps} needs delta={delta:.3g} > 1; use practical mode")
    g = f / delta**2
    cut = eps_prime / 10 if cutoff_fraction is None else cutoff_fraction
    params = SamplerParams(d, k, delta, base.scale, f, g, cut)
    sample_size = int(math.ceil(g * math.log2(n)))
    return TheoryParams(eps, eps_sdp, eps_prime, f, g, delta, sample_size, build_delta_net(d, delta).size, params)


# ---------------------------------------------------------------------------
# Samples and the recursive estimator


@dataclass(frozen=True)
class SampleSet:
    """Multiset of sampled sites and a net element (any d x d matrix) per distinct site."""

    sites: tuple[int, ...]
    blocks: dict[int, np.ndarray]

    def __post_init__(self):
        missing = set(self.sites) - set(self.blocks)
        if missing:
            raise ValueError(f"sites {sorted(missing)} have no assigned block")

    @property
    def distinct(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.sites)))


def draw_sites(n: int, size: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform sample with replacement."""
    return tuple(int(x) for x in rng.integers(0, n, size=size))


class Estimator:
    """EVAL for every prefix, memoised for one (sample, net assignment).

    ``table(P)`` returns an array over all label prefixes: entry J is the
    estimate of the level-(k-|P|) form with fixed sites P and labels J.
    """

    def __init__(self, tensor: CoordinateTensor, sample: SampleSet, params: SamplerParams):
        self.tensor = tensor
        self.params = params
        basis = build_herm_basis(tensor.d)
        sites = sample.distinct
        counts = {s: 0 for s in sites}
        for s in sample.sites:
            counts[s] += 1
        self.weights = {s: tensor.n * c / len(sample.sites) for s, c in counts.items()}
        self.tau = {s: basis.coords(np.asarray(sample.blocks[s], dtype=complex)) for s in sites}
        self.cache: dict[tuple[int, ...], np.ndarray] = {}

    def _small(self, prefix: tuple[int, ...]) -> bool:
        kids = self.tensor.children.get(prefix, ())
        return len(kids) <= self.params.cutoff_fraction * self.tensor.n

    def table(self, prefix: tuple[int, ...]) -> np.ndarray:
        if prefix in self.cache:
            return self.cache[prefix]
        ten = self.tensor
        p = len(prefix)
        out = np.zeros((ten.dsq,) * p)
        if not self._small(prefix):
            kids = set(ten.children.get(prefix, ()))
            for s, w in self.weights.items():
                if s not in kids:
                    continue
                child = prefix + (s,)
                inner = ten.coeffs[child] if p == ten.k - 1 else self.table(child)
                out = out + w * (inner @ self.tau[s])
        self.cache[prefix] = out
        return out

    def estimate(self, form: DegreeForm) -> float:
        return float(self.table(form.sites)[form.labels])


def eval_estimate(form: DegreeForm, sample: SampleSet, params: SamplerParams) -> float:
    """Sampled estimate of t_b for the form (its fixed sites must match its labels)."""
    if len(form.sites) != len(form.labels):
        raise ValueError("eval_estimate needs a = b (one fixed site per fixed label)")
    return Estimator(form.tensor, sample, params).estimate(form)
