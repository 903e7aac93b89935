import math

import numpy as np
import pytest

from hamlet.degree import SampleSet, SamplerParams, build_delta_net, decompose, draw_sites, nearest_net_point, t_full
from hamlet.instance import ProductAssignment, gen_random_dense, product_energy
from hamlet.operators import build_herm_basis, random_density
from hamlet.pipeline import oracle_extreme_eig
from hamlet.sdp import (
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    LinearFunctional,
    LinearizedConstraint,
    Linearizer,
    SdpModel,
    evaluate_on_p1,
    linearize,
    project_blocks,
    solve_sdp,
)

# qubit basis order: X, Y, Z, identity
X_, Y_, Z_ = 0, 1, 2


def functional(n, entries, const=0.0):
    c = np.zeros((n, 4))
    for (i, j), v in entries.items():
        c[i, j] = v
    return LinearFunctional(c, const)


def max_z_model():
    return SdpModel(1, 2, functional(1, {(0, Z_): 1.0}))


def x_with_z_equality_model():
    z = functional(1, {(0, Z_): 1.0})
    return SdpModel(1, 2, functional(1, {(0, X_): 1.0}), [LinearizedConstraint(z, 1.0, 1.0)])


def two_block_model():
    zz = functional(2, {(0, Z_): 1.0, (1, Z_): 1.0})
    return SdpModel(2, 2, zz, [LinearizedConstraint(zz, -np.inf, 1.0)])


def test_max_z_fixture():
    sol = solve_sdp(max_z_model(), 1e-6)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1, abs=1e-6)
    np.testing.assert_allclose(sol.assignment.blocks[0], np.diag([1, 0]), atol=1e-5)
    assert 0 <= sol.gap <= 1e-6


def test_equality_fixture():
    sol = solve_sdp(x_with_z_equality_model(), 1e-6)
    assert sol.status == OPTIMAL
    assert abs(sol.objective) <= 1e-6
    assert sol.residual <= 1e-6 and sol.gap <= 1e-6


def test_two_block_fixture():
    sol = solve_sdp(two_block_model(), 1e-6)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(1, abs=1e-6)
    assert sol.residual <= 1e-6


def test_min_sense():
    model = max_z_model()
    model.sense = "min"
    sol = solve_sdp(model)
    assert sol.objective == pytest.approx(-1, abs=1e-6)
    assert sol.bound == pytest.approx(-1, abs=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_random_linear_objective_matches_eigenvalue(d):
    rng = np.random.default_rng(d)
    n = 3
    c = rng.normal(size=(n, d * d))
    sol = solve_sdp(SdpModel(n, d, LinearFunctional(c)))
    basis = build_herm_basis(d)
    want = sum(np.linalg.eigvalsh(basis.expand(c[i]))[-1] for i in range(n))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(want, abs=1e-6)


def test_infeasible_detection():
    z = functional(1, {(0, Z_): 1.0})
    model = SdpModel(1, 2, z, [LinearizedConstraint(z, 1.5, 2.0)])
    sol = solve_sdp(model)
    assert sol.status == INFEASIBLE and sol.assignment is None


def test_constant_constraint_violation():
    model = SdpModel(1, 2, functional(1, {}), [LinearizedConstraint(functional(1, {}, 2.0), 0.0, 1.0)])
    assert solve_sdp(model).status == INFEASIBLE


def test_equality_slack_shifts_optimum():
    # with slack s the z-coordinate can drop to 1 - s, freeing x up to about sqrt(2 s)
    sol = solve_sdp(x_with_z_equality_model(), eps_sdp=1e-6, eq_slack=1e-9)
    assert np.sqrt(2e-9) * 0.99 <= sol.objective <= np.sqrt(2 * 2e-9)
    assert sol.objective > 1e-6


def test_tight_iteration_cap_is_flagged():
    sol = solve_sdp(two_block_model(), max_iter=1)
    assert sol.status == MAX_ITER


def test_project_blocks():
    blocks = np.array([np.diag([1.1, -0.1]), np.eye(2) / 2])
    out, change = project_blocks(blocks)
    np.testing.assert_allclose(out[0], np.diag([1, 0]), atol=1e-12)
    np.testing.assert_allclose(out[1], np.eye(2) / 2, atol=1e-12)
    assert change == pytest.approx(np.sqrt(0.02))


def test_dedup_keeps_tightest_interval():
    f = functional(2, {(0, Z_): 1.0})
    g = functional(2, {(1, X_): 1.0})
    model = SdpModel(2, 2, f, [LinearizedConstraint(f, -1, 0.5), LinearizedConstraint(g, 0, 1), LinearizedConstraint(f, -0.2, 0.9)])
    out = model.deduplicated()
    assert len(out.constraints) == 2
    assert (out.constraints[0].lower, out.constraints[0].upper) == (-0.2, 0.5)


def test_dump_format():
    text = two_block_model().dump().splitlines()
    assert text[:3] == ["hamlet-sdp 1", "sense max", "blocks 2 2"]
    assert text[3] == "objective 2 0.0"
    assert text[4:6] == ["0 2 1.0", "1 2 1.0"]
    assert text[6] == "constraints 1"
    assert text[7] == "constraint 2 0.0 -inf 1.0"


def test_k1_linearization_is_exact():
    inst = gen_random_dense(4, 2, 1, 0)
    ten = decompose(inst)
    model = linearize(ten, None, SamplerParams.anchored(2, 1, 0.5, 0.5))
    assert model.constraints == []
    rng = np.random.default_rng(0)
    blocks = np.array([random_density(2, rng) for _ in range(4)])
    assert model.objective.value(blocks) == pytest.approx(product_energy(inst, ProductAssignment(blocks)))
    sol = solve_sdp(model)
    assert evaluate_on_p1(ten, sol) == pytest.approx(sum(np.linalg.eigvalsh(t.matrix)[-1] for t in inst.terms), abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("k", [2, 3])
def test_honest_assignment_feasible_with_full_sample(seed, k):
    rng = np.random.default_rng(seed)
    n, delta = 5, 0.5
    inst = gen_random_dense(n, 2, k, seed)
    ten = decompose(inst)
    honest = np.array([random_density(2, rng) for _ in range(n)])
    net = build_delta_net(2, delta)
    sample = SampleSet(tuple(range(n)), {i: nearest_net_point(net, honest[i]) for i in range(n)})
    # no sampling term: the ladder only pays for the net radius
    params = SamplerParams.from_f_g(2, k, 0.0, 1.0, delta)
    model = linearize(ten, sample, params)
    assert max(c.violation(honest) for c in model.constraints) <= 1e-6
    sol = solve_sdp(model)
    assert sol.status == OPTIMAL
    assert sol.objective >= model.objective.value(honest) - 1e-6


def test_constraint_count_fixture():
    n = 6
    inst = gen_random_dense(n, 2, 2, 0)
    rng = np.random.default_rng(0)
    sites = draw_sites(n, 4, rng)
    net = build_delta_net(2, 0.5)
    sample = SampleSet(sites, {s: nearest_net_point(net, random_density(2, rng)) for s in set(sites)})
    model = linearize(decompose(inst), sample, SamplerParams.anchored(2, 2, 0.5, 0.5))
    # one level-1 constraint per (site with a later neighbour, label): d^2 (n - 1)
    assert len(model.constraints) == 4 * (n - 1)
    inst3 = gen_random_dense(n, 2, 3, 0)
    model3 = linearize(decompose(inst3), sample, SamplerParams.anchored(2, 3, 0.5, 0.5))
    # level 2: d^2 per site with a later pair; level 1: d^4 per ordered site pair below the last site
    assert len(model3.constraints) == 4 * (n - 2) + 16 * math.comb(n - 1, 2)


@pytest.mark.parametrize("seed", range(4))
def test_p1_values_bounded_by_top_eigenvalue(seed):
    rng = np.random.default_rng(seed)
    n = 5
    inst = gen_random_dense(n, 2, 2, seed)
    ten = decompose(inst)
    sites = draw_sites(n, 3, rng)
    net = build_delta_net(2, 0.5)
    sample = SampleSet(sites, {s: nearest_net_point(net, random_density(2, rng)) for s in set(sites)})
    # a wide top error keeps these tiny samples feasible
    model = Linearizer(ten, SamplerParams.anchored(2, 2, 0.5, 2.0)).build(sample)
    sol = solve_sdp(model)
    assert sol.status == OPTIMAL
    lam, _ = oracle_extreme_eig(inst)
    assert evaluate_on_p1(ten, sol) <= lam + 1e-6
    assert evaluate_on_p1(ten, sol) == pytest.approx(t_full(ten, sol.assignment))


def test_zero_objective_is_reproducible():
    model = SdpModel(3, 2, functional(3, {}))
    a, b = solve_sdp(model), solve_sdp(model)
    assert a.objective == b.objective == 0
    assert np.array_equal(a.assignment.blocks, b.assignment.blocks)
