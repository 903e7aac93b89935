"""Exhaustive-sampling approximation pipeline and brute-force oracles."""

from __future__ import annotations

import datetime as _dt
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .degree import (
    DeltaNet,
    SampleSet,
    SamplerParams,
    build_delta_net,
    compute_params,
    covering_subnet,
    decompose,
    draw_sites,
)
from .instance import (
    LocalHamiltonianInstance,
    ProductAssignment,
    apply_hamiltonian,
    full_matrix,
    product_energy,
)
from .operators import CapacityError, PureState
from .product import best_rsd_branch, environment, round_conditional_expectations
from .sdp import INFEASIBLE, Linearizer, solve_sdp

SCHEMA_VERSION = 1
ORACLE_MAX_DIM = 2**12
DENSE_EIG_LIMIT = 512


# ---------------------------------------------------------------------------
# Oracles


def oracle_extreme_eig(inst: LocalHamiltonianInstance, which: str = "max", max_dim: int = ORACLE_MAX_DIM):
    """Exact extreme eigenpair of the full Hamiltonian: (value, eigenvector)."""
    if which not in ("max", "min"):
        raise ValueError(f"which must be 'max' or 'min', got {which!r}")
    dim = inst.dim
    if dim > max_dim:
        raise CapacityError(f"oracle dimension {dim} exceeds cap {max_dim}")
    if dim <= DENSE_EIG_LIMIT:
        w, v = np.linalg.eigh(full_matrix(inst))
        i = -1 if which == "max" else 0
        return float(w[i]), v[:, i]
    op = spla.LinearOperator((dim, dim), matvec=lambda x: apply_hamiltonian(inst, x), dtype=complex)
    w, v = spla.eigsh(op, k=1, which="LA" if which == "max" else "SA", tol=1e-12)
    return float(w[0]), v[:, 0]


def _better(a: float, b: float, direction: str) -> bool:
    return a > b if direction == "max" else a < b


def _local_search(inst, blocks, direction, tol=1e-10, max_sweeps=1000):
    """Alternating single-site eigen-updates until the value changes by < tol."""
    value = product_energy(inst, ProductAssignment(blocks))
    for _ in range(max_sweeps):
        for s in range(inst.n):
            env, _ = environment(inst, blocks, s)
            w, v = np.linalg.eigh((env + env.conj().T) / 2)
            vec = v[:, -1] if direction == "max" else v[:, 0]
            blocks[s] = np.outer(vec, vec.conj())
        new = product_energy(inst, ProductAssignment(blocks))
        if abs(new - value) < tol:
            value = new
            break
        value = new
    return blocks, value


def _extreme(vals: np.ndarray, direction: str) -> float:
    return float(np.max(vals) if direction == "max" else np.min(vals))


def bloch_grid_search(inst: LocalHamiltonianInstance, direction: str = "max", resolution=(120, 240), sweeps: int = 30):
    """Grid over site 0's Bloch sphere; remaining sites (n <= 3, d = 2) by batched eigen-updates."""
    if inst.d != 2 or inst.n > 3 or inst.n < 1:
        raise ValueError("Bloch grid search needs d = 2 and n <= 3")
    n = inst.n
    theta = np.linspace(0, np.pi, resolution[0])
    phi = np.linspace(0, 2 * np.pi, resolution[1], endpoint=False)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    v0 = np.stack([np.cos(tt / 2).ravel(), (np.exp(1j * pp) * np.sin(tt / 2)).ravel()], axis=1)
    h = full_matrix(inst)
    G = len(v0)
    vecs = [v0] + [np.tile(np.array([1.0, 0.0], dtype=complex), (G, 1)) for _ in range(n - 1)]
    pick = -1 if direction == "max" else 0
    eye = np.broadcast_to(np.eye(2, dtype=complex), (G, 2, 2))

    def env(site):
        # batched isometry W: C^2 -> C^(2^n), other sites fixed; env = W^dag H W
        w = np.ones((G, 1, 1), dtype=complex)
        for q in range(n):
            f = eye if q == site else vecs[q][:, :, None]
            w = np.einsum("zij,zkl->zikjl", w, f).reshape(G, w.shape[1] * f.shape[1], w.shape[2] * f.shape[2])
        return np.conj(np.swapaxes(w, 1, 2)) @ (h @ w)

    def values():
        return np.real(np.einsum("za,zab,zb->z", v0.conj(), env(0), v0))

    vals = values()
    for _ in range(sweeps if n > 1 else 0):
        for s in range(1, n):
            e = env(s)
            _, v = np.linalg.eigh((e + np.conj(np.swapaxes(e, 1, 2))) / 2)
            vecs[s] = v[:, :, pick]
        new = values()
        # only the best grid point is reported, so stop once it settles
        done = abs(_extreme(new, direction) - _extreme(vals, direction)) < 1e-12
        vals = new
        if done:
            break
    best = int(np.argmax(vals) if direction == "max" else np.argmin(vals))
    return ProductAssignment.from_vectors([vecs[q][best] for q in range(n)]), float(vals[best])


def oracle_product(inst: LocalHamiltonianInstance, direction: str = "max", restarts: int = 20, seed: int = 0):
    """Best product state found by restarted alternating optimisation: (assignment, value)."""
    rng = np.random.default_rng(seed)
    d = inst.d
    best_blocks, best_val = None, -np.inf if direction == "max" else np.inf
    starts = []
    for _ in range(max(restarts, 1)):
        vs = rng.normal(size=(inst.n, d)) + 1j * rng.normal(size=(inst.n, d))
        vs /= np.linalg.norm(vs, axis=1, keepdims=True)
        starts.append(np.einsum("ni,nj->nij", vs, vs.conj()))
    if inst.d == 2 and 1 <= inst.n <= 3:
        starts.append(bloch_grid_search(inst, direction)[0].blocks)
    for blocks in starts:
        blocks, val = _local_search(inst, blocks.copy(), direction)
        if best_blocks is None or _better(val, best_val, direction):
            best_blocks, best_val = blocks, val
    return ProductAssignment(best_blocks), float(best_val)


# ---------------------------------------------------------------------------
# Configuration and report


@dataclass
class PipelineConfig:
    mode: str = "practical"
    eps: float | None = None
    sample_size: int | None = 3
    delta: float | None = 0.5
    eps_prime: float | None = 0.5
    eps_sdp: float = 1e-6
    direction: str = "max"
    seed: int = 0
    max_iterations: int = 4096
    jobs: int = 1
    net: str = "cover"
    cutoff_fraction: float | None = None

    def validate(self) -> None:
        if self.mode == "theory":
            if self.eps is None or self.eps <= 0:
                raise ValueError("theory mode needs a positive eps")
            if any(v is not None for v in (self.sample_size, self.delta, self.eps_prime)):
                raise ValueError("theory mode derives sample size, delta and eps'; do not set them")
        elif self.mode == "practical":
            if self.eps is not None:
                raise ValueError("practical mode takes sample size, delta and eps' instead of eps")
            if not self.sample_size or self.sample_size < 1:
                raise ValueError("sample size must be a positive integer")
            if self.delta is None or not 0 < self.delta <= 2:
                raise ValueError("delta must lie in (0, 2]")
            if self.eps_prime is None or self.eps_prime <= 0:
                raise ValueError("eps' must be positive")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.direction not in ("max", "min"):
            raise ValueError("direction must be 'max' or 'min'")
        if self.eps_sdp <= 0:
            raise ValueError("eps_sdp must be positive")
        if self.max_iterations < 1 or self.jobs < 1:
            raise ValueError("iteration cap and jobs must be positive")
        if self.net not in ("cover", "full"):
            raise ValueError("net must be 'cover' or 'full'")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def theory(cls, eps: float, **kw) -> "PipelineConfig":
        return cls(mode="theory", eps=eps, sample_size=None, delta=None, eps_prime=None, net="full", **kw)


@dataclass
class IterationRecord:
    iter_id: int
    net_assignment: int
    sdp_status: str
    opt2: float | None
    p1_value: float | None
    wall_ms: float


@dataclass
class RunReport:
    config: dict
    params: dict
    instance: dict
    sample: list[int]
    net: dict
    iterations_total: int
    iterations_run: int
    partial: bool
    best_iter: int | None
    best_value: float
    rounded_value: float
    rounded_vectors: list
    fallback: bool
    records: list[IterationRecord] = field(default_factory=list)
    started_at: str = ""
    wall_ms: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        out = asdict(self)
        out = {"schema_version": SCHEMA_VERSION, **out}
        if not timing:
            out.pop("started_at")
            out.pop("wall_ms")
            for r in out["records"]:
                r.pop("wall_ms")
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(_clean(self.to_dict(timing)), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        lines = ["iter_id,sdp_status,opt2,p1_value,wall_ms"]
        for r in self.records:
            lines.append(f"{r.iter_id},{r.sdp_status},{_num(r.opt2)},{_num(r.p1_value)},{r.wall_ms:.3f}")
        return "\n".join(lines) + "\n"


def _num(x):
    return "" if x is None else repr(float(x))


def _clean(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def vectors_of(assign: ProductAssignment) -> list:
    """Top eigenvector of each block as [[re, im], ...] (blocks are pure after rounding)."""
    out = []
    for b in assign.blocks:
        w, v = np.linalg.eigh(b)
        vec = v[:, -1]
        vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
        out.append([[float(z.real), float(z.imag)] for z in vec])
    return out


# ---------------------------------------------------------------------------
# Net enumeration


class NetIndex:
    """Net elements addressable by integer index."""

    def __init__(self, net: DeltaNet, strategy: str):
        self.net = net
        self.strategy = strategy
        if strategy == "cover":
            self.points = covering_subnet(net)
            self.size = len(self.points)
        else:
            self.points = None
            self.size = net.size

    def element(self, idx: int) -> np.ndarray:
        if self.points is not None:
            return self.points[idx]
        net, d = self.net, self.net.d
        npair = d * (d - 1) // 2
        m, nd = len(net.offdiag_grid), len(net.diag_grid)
        out = np.zeros((d, d), dtype=complex)
        for i in range(d):
            idx, r = divmod(idx, nd)
            out[i, i] = net.diag_grid[r]
        iu = np.triu_indices(d, 1)
        for p in range(npair):
            idx, r = divmod(idx, m)
            z = net.offdiag_grid[r]
            out[iu[0][p], iu[1][p]] = z
            out[iu[1][p], iu[0][p]] = np.conj(z)
        return out


def assignment_indices(size: int, slots: int, cap: int, rng: np.random.Generator) -> tuple[list[int], int]:
    """All assignment indices if there are at most ``cap``, else ``cap`` distinct random ones."""
    total = size**slots
    if total <= cap:
        return list(range(total)), total
    chosen: dict[int, None] = {}
    while len(chosen) < cap:
        idx = 0
        for _ in range(slots):
            idx = idx * size + int(rng.integers(size))
        chosen.setdefault(idx, None)
    return list(chosen), total


def _digits(idx: int, base: int, slots: int) -> list[int]:
    out = []
    for _ in range(slots):
        idx, r = divmod(idx, base)
        out.append(r)
    return out


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class _Job:
    inst: LocalHamiltonianInstance
    params: SamplerParams
    net_index: NetIndex
    sites: tuple[int, ...]
    eps_sdp: float
    direction: str


def _run_chunk(job: _Job, items: list[tuple[int, int]]):
    tensor = decompose(job.inst)
    lin = Linearizer(tensor, job.params)
    distinct = sorted(set(job.sites))
    out = []
    for iter_id, idx in items:
        t0 = time.perf_counter()
        digits = _digits(idx, job.net_index.size, len(distinct))
        blocks = {s: job.net_index.element(g) for s, g in zip(distinct, digits)}
        model = lin.build(SampleSet(job.sites, blocks), job.direction)
        sol = solve_sdp(model, job.eps_sdp)
        if sol.status == INFEASIBLE or sol.assignment is None:
            rec = IterationRecord(iter_id, idx, sol.status, None, None, 0.0)
            blocks_out = None
        else:
            val = product_energy(job.inst, sol.assignment)
            rec = IterationRecord(iter_id, idx, sol.status, float(sol.objective), val, 0.0)
            blocks_out = sol.assignment.blocks
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        out.append((rec, blocks_out))
    return out


def resolve_params(inst: LocalHamiltonianInstance, config: PipelineConfig):
    """(SamplerParams, sample size, net radius, params dict) for either mode."""
    d, k, n = inst.d, inst.k, inst.n
    if config.mode == "theory":
        tp = compute_params(config.eps, n, d, k, config.cutoff_fraction)
        info = tp.as_dict()
        return tp.params, tp.sample_size, tp.delta, tp.eps_sdp, info
    cut = config.eps_prime / 10 if config.cutoff_fraction is None else config.cutoff_fraction
    params = SamplerParams.anchored(d, k, config.delta, config.eps_prime, cut)
    info = {
        "eps_prime": config.eps_prime,
        "delta": config.delta,
        "sample_size": config.sample_size,
        "ladder": params.ladder,
        "scale": params.scale,
        "cutoff_fraction": cut,
    }
    return params, config.sample_size, config.delta, config.eps_sdp, info


def approximate(inst: LocalHamiltonianInstance, config: PipelineConfig) -> RunReport:
    config.validate()
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    params, sample_size, delta, eps_sdp, info = resolve_params(inst, config)
    if inst.k == 1:
        sites: tuple[int, ...] = ()
    else:
        sites = draw_sites(inst.n, sample_size, rng)
    distinct = sorted(set(sites))
    net_index = NetIndex(build_delta_net(inst.d, min(delta, 2.0)), config.net)
    indices, total = assignment_indices(net_index.size, len(distinct), config.max_iterations, rng)
    items = list(enumerate(indices))
    job = _Job(inst, params, net_index, sites, eps_sdp, config.direction)
    if config.jobs > 1 and len(items) > 1:
        chunks = [items[i :: config.jobs] for i in range(config.jobs)]
        with ProcessPoolExecutor(config.jobs) as pool:
            parts = list(pool.map(_run_chunk, [job] * len(chunks), chunks))
        results = sorted(itertools.chain.from_iterable(parts), key=lambda r: r[0].iter_id)
    else:
        results = _run_chunk(job, items)

    records = [r for r, _ in results]
    best_iter, best_val, best_blocks = None, None, None
    for rec, blocks in results:
        if rec.p1_value is None:
            continue
        if best_val is None or _better(rec.p1_value, best_val, config.direction):
            best_iter, best_val, best_blocks = rec.iter_id, rec.p1_value, blocks
    fallback = best_blocks is None
    if fallback:
        start = ProductAssignment.maximally_mixed(inst.n, inst.d)
        best_val = product_energy(inst, start)
    else:
        start = ProductAssignment(best_blocks)
    rounded = round_conditional_expectations(inst, start, config.direction)
    rounded_val = product_energy(inst, rounded)
    return RunReport(
        config=asdict(config),
        params=info,
        instance={"n": inst.n, "d": inst.d, "k": inst.k, "terms": len(inst.terms)},
        sample=list(sites),
        net={"strategy": config.net, "delta": delta, "size": net_index.size},
        iterations_total=total,
        iterations_run=len(items),
        partial=len(items) < total,
        best_iter=best_iter,
        best_value=float(best_val),
        rounded_value=float(rounded_val),
        rounded_vectors=vectors_of(rounded),
        fallback=fallback,
        records=records,
        started_at=started,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


def compare(inst: LocalHamiltonianInstance, config: PipelineConfig, seeds=None, restarts: int = 20) -> dict:
    """Pipeline runs against both oracles, plus the product-ratio check."""
    seeds = [config.seed] if seeds is None else list(seeds)
    lam, vec = oracle_extreme_eig(inst, config.direction)
    _, opt_p = oracle_product(inst, config.direction, restarts=restarts, seed=0)
    witness = best_rsd_branch(inst, PureState((inst.d,) * inst.n, vec))[1] if config.direction == "max" else None
    if witness is not None and witness > opt_p:
        opt_p = witness
    runs = []
    for s in seeds:
        cfg = PipelineConfig(**{**asdict(config), "seed": s})
        rep = approximate(inst, cfg)
        runs.append({"seed": s, "best_value": rep.best_value, "rounded_value": rep.rounded_value, "partial": rep.partial})
    vals = np.array([r["rounded_value"] for r in runs])
    ratio_p = vals / opt_p if opt_p else np.full(len(vals), np.nan)
    ratio_l = vals / lam if lam else np.full(len(vals), np.nan)
    threshold = lam / inst.d ** (inst.k - 1)
    return {
        "schema_version": SCHEMA_VERSION,
        "lambda_extreme": lam,
        "opt_product": opt_p,
        "rsd_witness": witness,
        "product_ratio_ok": bool(opt_p >= threshold - 1e-6) if config.direction == "max" else None,
        "runs": runs,
        "summary": {
            "seeds": len(runs),
            "ratio_to_opt_product": {"min": float(np.min(ratio_p)), "mean": float(np.mean(ratio_p)), "max": float(np.max(ratio_p))},
            "ratio_to_lambda": {"min": float(np.min(ratio_l)), "mean": float(np.mean(ratio_l)), "max": float(np.max(ratio_l))},
        },
    }
