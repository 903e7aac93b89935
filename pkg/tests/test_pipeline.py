import csv
import io
import itertools
import json

import numpy as np
import pytest

from hamlet.instance import (
    LocalHamiltonianInstance,
    LocalTerm,
    ProductAssignment,
    complement,
    embed_csp,
    full_matrix,
    gen_random_dense,
    product_energy,
    sat_clause,
    single_term_instance,
)
from hamlet.operators import CapacityError
from hamlet.pipeline import (
    PipelineConfig,
    approximate,
    assignment_indices,
    bloch_grid_search,
    compare,
    oracle_extreme_eig,
    oracle_product,
)

PHI = np.array([1, 0, 0, 1]) / np.sqrt(2)
PHI_PROJ = np.outer(PHI, PHI)
P00 = np.diag([1.0, 0, 0, 0])


def all_pairs(n):
    return LocalHamiltonianInstance(n, 2, 2, tuple(LocalTerm(s, P00) for s in itertools.combinations(range(n), 2)))


def dense_2sat(n, rng):
    """One random 2-clause on every pair of variables."""
    sign = lambda: 1 if rng.random() < 0.5 else -1  # noqa: E731
    return [[(i + 1) * sign(), (j + 1) * sign()] for i, j in itertools.combinations(range(n), 2)]


def max_satisfied(n, clauses):
    return max(
        sum(any((x[abs(l) - 1] == 1) == (l > 0) for l in c) for c in clauses)
        for x in itertools.product([0, 1], repeat=n)
    )


def vectors_to_assignment(vectors):
    return ProductAssignment.from_vectors([np.array([complex(*z) for z in v]) for v in vectors])


def test_oracle_eig_examples():
    assert oracle_extreme_eig(single_term_instance(PHI_PROJ, (0, 1), 2, 2), "max")[0] == pytest.approx(1)
    csp = embed_csp([sat_clause([1]), sat_clause([-1])], n=1)
    assert oracle_extreme_eig(csp, "min")[0] == pytest.approx(1)
    with pytest.raises(ValueError):
        oracle_extreme_eig(csp, "mid")


def test_oracle_eig_sparse_path_matches_dense():
    inst = gen_random_dense(10, 2, 2, 0)
    w = np.linalg.eigvalsh(full_matrix(inst))
    lam, vec = oracle_extreme_eig(inst, "max")
    assert lam == pytest.approx(w[-1], abs=1e-8)
    assert np.linalg.norm(vec) == pytest.approx(1)
    assert oracle_extreme_eig(inst, "min")[0] == pytest.approx(w[0], abs=1e-8)


def test_oracle_eig_capacity():
    with pytest.raises(CapacityError):
        oracle_extreme_eig(gen_random_dense(6, 2, 2, 0), max_dim=32)


@pytest.mark.parametrize("seed", range(5))
def test_top_eigenvalue_dominates_product_optimum(seed):
    inst = gen_random_dense(6, 2, 2, seed)
    lam, _ = oracle_extreme_eig(inst)
    _, opt_p = oracle_product(inst, restarts=5)
    assert lam >= opt_p - 1e-9
    assert opt_p >= lam / 2 - 1e-6


def test_oracle_product_examples():
    assert oracle_product(single_term_instance(PHI_PROJ, (0, 1), 2, 2))[1] == pytest.approx(0.5, abs=1e-6)
    double = single_term_instance(np.kron(PHI_PROJ, PHI_PROJ), (0, 1, 2, 3), 4, 2)
    assert oracle_product(double)[1] == pytest.approx(0.25, abs=1e-3)
    assign, val = oracle_product(all_pairs(8), restarts=5)
    assert val == pytest.approx(28, abs=1e-6)
    assert product_energy(all_pairs(8), assign) == pytest.approx(val)


def test_oracle_product_min_direction():
    _, val = oracle_product(all_pairs(4), "min", restarts=5)
    assert val == pytest.approx(0, abs=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_bloch_grid_agrees_with_restarts(seed):
    inst = gen_random_dense(3, 2, 2, seed)
    assign, val = bloch_grid_search(inst)
    assert product_energy(inst, assign) == pytest.approx(val, abs=1e-10)
    best = oracle_product(inst, restarts=20)[1]
    # the grid is a cross-check: within grid resolution of the restarted optimum
    assert val <= best + 1e-9
    assert val >= best - 1e-3


def test_bloch_grid_rejects_large_instances():
    with pytest.raises(ValueError):
        bloch_grid_search(gen_random_dense(4, 2, 2, 0))


def test_assignment_indices():
    rng = np.random.default_rng(0)
    idx, total = assignment_indices(4, 2, 100, rng)
    assert idx == list(range(16)) and total == 16
    idx, total = assignment_indices(10, 3, 50, rng)
    assert total == 1000 and len(set(idx)) == 50 and max(idx) < 1000


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(delta=3.0).validate()
    with pytest.raises(ValueError):
        PipelineConfig(eps=0.5).validate()
    with pytest.raises(ValueError):
        PipelineConfig(direction="up").validate()
    with pytest.raises(ValueError):
        PipelineConfig(mode="theory", eps=0.5).validate()
    PipelineConfig.theory(0.5).validate()


def test_theory_mode_rejects_infeasible_eps():
    with pytest.raises(ValueError, match="practical mode"):
        approximate(all_pairs(4), PipelineConfig.theory(1000.0))


def test_theory_mode_runs_capped():
    rep = approximate(all_pairs(4), PipelineConfig.theory(0.5, max_iterations=2))
    assert rep.partial and rep.iterations_run == 2
    assert rep.params["sample_size"] == len(rep.sample)


def test_k1_single_term_is_exact():
    inst = single_term_instance(np.diag([0.2, 0.9]), (1,), 3, 2)
    inst = LocalHamiltonianInstance(3, 2, 1, inst.terms)
    rep = approximate(inst, PipelineConfig())
    assert rep.sample == [] and rep.iterations_total == 1
    assert rep.best_value == pytest.approx(0.9, abs=1e-6)
    assert rep.rounded_value == pytest.approx(0.9, abs=1e-9)


def test_k1_min_direction():
    inst = gen_random_dense(4, 2, 1, 3)
    rep = approximate(inst, PipelineConfig(direction="min"))
    want = sum(np.linalg.eigvalsh(t.matrix)[0] for t in inst.terms)
    assert rep.rounded_value == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_max_2sat_within_additive_error(seed):
    rng = np.random.default_rng(seed)
    clauses = dense_2sat(8, rng)
    inst = complement(embed_csp([sat_clause(c) for c in clauses], n=8))
    rep = approximate(inst, PipelineConfig(sample_size=2, delta=1.0, eps_prime=4.0, seed=seed))
    best = max_satisfied(8, clauses)
    assert not rep.fallback
    assert rep.rounded_value >= best - 0.1 * 8**2
    assert rep.rounded_value <= best + 1e-8


def test_report_values_are_realized():
    inst = gen_random_dense(5, 2, 2, 1)
    rep = approximate(inst, PipelineConfig(sample_size=2, delta=1.0, eps_prime=2.0, max_iterations=40))
    feasible = [r.p1_value for r in rep.records if r.p1_value is not None]
    assert rep.best_value == pytest.approx(max(feasible))
    assert rep.best_iter is not None
    rounded = vectors_to_assignment(rep.rounded_vectors)
    assert abs(product_energy(inst, rounded) - rep.rounded_value) <= 1e-8
    assert rep.rounded_value >= rep.best_value - 1e-9
    lam, _ = oracle_extreme_eig(inst)
    assert rep.rounded_value <= lam + 1e-8


def test_min_direction_report():
    inst = gen_random_dense(5, 2, 2, 2)
    rep = approximate(inst, PipelineConfig(direction="min", sample_size=2, delta=1.0, eps_prime=2.0, max_iterations=30))
    feasible = [r.p1_value for r in rep.records if r.p1_value is not None]
    if feasible:
        assert rep.best_value == pytest.approx(min(feasible))
    assert rep.rounded_value <= rep.best_value + 1e-9


def test_partial_flag_and_fallback():
    inst = all_pairs(6)
    rep = approximate(inst, PipelineConfig(sample_size=3, delta=0.5, max_iterations=5, seed=1))
    assert rep.partial and rep.iterations_run == 5 < rep.iterations_total
    # a vanishing error budget makes every sampled SDP infeasible
    infeasible = approximate(inst, PipelineConfig(sample_size=2, delta=1.0, eps_prime=1e-6, max_iterations=10))
    assert all(r.sdp_status == "infeasible" for r in infeasible.records)
    assert infeasible.fallback and infeasible.best_iter is None
    # fallback starts from I/2 everywhere: 15 pairs at 1/4 each
    assert infeasible.best_value == pytest.approx(15 / 4)
    assert infeasible.rounded_value == pytest.approx(15)


def test_determinism_and_jobs():
    inst = gen_random_dense(5, 2, 2, 4)
    cfg = dict(sample_size=2, delta=1.0, eps_prime=2.0, max_iterations=12, seed=7)
    a = approximate(inst, PipelineConfig(**cfg)).to_json(timing=False)
    b = approximate(inst, PipelineConfig(**cfg)).to_json(timing=False)
    c = approximate(inst, PipelineConfig(jobs=2, **cfg)).to_json(timing=False)
    assert a == b
    ja, jc = json.loads(a), json.loads(c)
    ja["config"].pop("jobs"), jc["config"].pop("jobs")
    assert ja == jc


def test_report_serialization():
    rep = approximate(all_pairs(4), PipelineConfig(sample_size=2, delta=1.0, max_iterations=4))
    obj = json.loads(rep.to_json())
    assert obj["schema_version"] == 1
    assert "started_at" in obj and "wall_ms" in obj["records"][0]
    assert "started_at" not in json.loads(rep.to_json(timing=False))
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["iter_id", "sdp_status", "opt2", "p1_value", "wall_ms"]
    assert len(rows) == 1 + len(rep.records)


def test_compare_epr_tightness():
    inst = single_term_instance(PHI_PROJ, (0, 1), 2, 2)
    rep = compare(inst, PipelineConfig(sample_size=2, delta=1.0, max_iterations=8), seeds=[0, 1])
    assert rep["lambda_extreme"] == pytest.approx(1)
    assert rep["opt_product"] == pytest.approx(0.5, abs=1e-6)
    assert rep["product_ratio_ok"]
    assert rep["summary"]["seeds"] == 2
    for run in rep["runs"]:
        assert run["rounded_value"] <= rep["opt_product"] + 1e-6
    assert rep["summary"]["ratio_to_lambda"]["max"] == pytest.approx(0.5, abs=1e-6)
