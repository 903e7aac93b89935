import itertools
import json

import numpy as np
import pytest

from hamlet.instance import (
    LocalHamiltonianInstance,
    LocalTerm,
    ParseError,
    ProductAssignment,
    complement,
    densify,
    density_value,
    embed_csp,
    full_matrix,
    gen_random_dense,
    parse,
    parse_dimacs,
    product_energy,
    pure_energy,
    sat_clause,
    serialize,
    single_term_instance,
    validate,
)
from hamlet.operators import PureState, embed_term, random_density, random_pure_state

P00 = np.diag([1.0, 0, 0, 0])
PHI = np.outer([1, 0, 0, 1], [1, 0, 0, 1]) / 2


def epr_instance():
    return single_term_instance(PHI, (0, 1), 2, 2)


def all_pairs(n):
    return LocalHamiltonianInstance(n, 2, 2, tuple(LocalTerm(s, P00) for s in itertools.combinations(range(n), 2)))


def random_3sat(n, m, rng):
    out = []
    for _ in range(m):
        vs = rng.choice(n, size=3, replace=False)
        out.append([int(v + 1) * (1 if rng.random() < 0.5 else -1) for v in vs])
    return out


def min_unsat(n, clauses):
    best = len(clauses)
    for x in itertools.product([0, 1], repeat=n):
        unsat = sum(not any((x[abs(l) - 1] == 1) == (l > 0) for l in c) for c in clauses)
        best = min(best, unsat)
    return best


def test_validate_examples():
    assert validate(single_term_instance(P00, (0, 1), 2, 2)) == []
    issues = validate(single_term_instance(2 * P00, (0, 1), 2, 2))
    assert any("norm violation" in s for s in issues)
    issues = validate(single_term_instance(-np.diag([1.0, -1.0]), (0,), 1, 2))
    assert any("not PSD" in s for s in issues)


def test_construction_rejects_bad_structure():
    with pytest.raises(ValueError, match="duplicate"):
        LocalHamiltonianInstance(2, 2, 2, (LocalTerm((0, 1), P00), LocalTerm((0, 1), P00)))
    with pytest.raises(ValueError, match="strictly increasing"):
        LocalTerm((1, 0), P00)
    with pytest.raises(ValueError, match="out of range"):
        LocalHamiltonianInstance(2, 2, 2, (LocalTerm((1, 2), P00),))
    with pytest.raises(ValueError, match="locality"):
        LocalHamiltonianInstance(3, 2, 1, (LocalTerm((0, 1), P00),))


def test_product_energy_examples():
    inst = single_term_instance(P00, (0, 1), 2, 2)
    zero = np.diag([1.0, 0.0])
    assert product_energy(inst, ProductAssignment(np.array([zero, zero]))) == pytest.approx(1.0)
    assert product_energy(epr_instance(), ProductAssignment.maximally_mixed(2, 2)) == pytest.approx(0.25, abs=1e-14)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("k", [1, 2, 3])
def test_product_energy_matches_full_space(seed, k):
    rng = np.random.default_rng(seed)
    n = 4
    inst = gen_random_dense(n, 2, k, seed)
    blocks = np.array([random_density(2, rng) for _ in range(n)])
    full = full_matrix(inst)
    rho = blocks[0]
    for b in blocks[1:]:
        rho = np.kron(rho, b)
    val = product_energy(inst, ProductAssignment(blocks))
    assert abs(val - np.trace(full @ rho).real) < 1e-8
    assert 0 <= val <= len(inst.terms)


def test_full_matrix_matches_embedding():
    inst = gen_random_dense(4, 2, 2, 11)
    ref = sum(embed_term(t.matrix, t.support, 4, 2) for t in inst.terms)
    np.testing.assert_allclose(full_matrix(inst), ref, atol=1e-12)


def test_pure_energy_examples():
    inst = epr_instance()
    assert pure_energy(inst, PureState((2, 2), [1, 0, 0, 1] / np.sqrt(2))) == pytest.approx(1)
    assert pure_energy(inst, PureState((2, 2), [1, 0, 0, 0])) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(4))
def test_pure_energy_matches_spectral_expansion(seed):
    rng = np.random.default_rng(seed)
    inst = gen_random_dense(4, 2, 2, seed)
    psi = random_pure_state((2,) * 4, rng)
    w, v = np.linalg.eigh(full_matrix(inst))
    ref = float(np.sum(w * np.abs(v.conj().T @ psi.amplitudes) ** 2))
    assert abs(pure_energy(inst, psi) - ref) < 1e-8


def test_density_value_examples():
    assert density_value(all_pairs(6)) == pytest.approx(15 / 4)
    assert density_value(LocalHamiltonianInstance(3, 2, 2, ())) == 0
    assert density_value(single_term_instance(np.eye(4), (0, 1), 2, 2)) == pytest.approx(1)


def test_random_dense_generator():
    inst = gen_random_dense(4, 2, 2, 7)
    assert len(inst.terms) == 6 and validate(inst) == []
    again = gen_random_dense(4, 2, 2, 7)
    for a, b in zip(inst.terms, again.terms):
        assert a.support == b.support and np.array_equal(a.matrix, b.matrix)


def test_random_dense_density_monte_carlo():
    # each term has expected trace d^k / 2, so density_value / C(n,2) averages 0.5
    vals = [density_value(gen_random_dense(5, 2, 2, s)) / 10 for s in range(50)]
    assert abs(np.mean(vals) - 0.5) < 0.05
    assert min(vals) >= 0.3


def test_csp_examples():
    inst = embed_csp([sat_clause([1, 2])], n=2)
    np.testing.assert_array_equal(inst.terms[0].matrix, np.diag([1, 0, 0, 0]))
    inst = embed_csp([sat_clause([1]), sat_clause([-1])], n=1)
    np.testing.assert_array_equal(inst.terms[0].matrix, np.eye(2))
    assert np.linalg.eigvalsh(full_matrix(inst))[0] == pytest.approx(1)


def test_csp_predicate_respects_variable_order():
    # clause "x1 and not x0" listed as (1, 0)
    inst = embed_csp([((1, 0), lambda v: v[0] == 1 and v[1] == 0)], n=2)
    # only assignment x0=0, x1=1 (index 1) satisfies
    np.testing.assert_array_equal(np.diag(inst.terms[0].matrix).real, [1, 0, 1, 1])


@pytest.mark.parametrize("seed", range(5))
def test_csp_min_unsat_exact(seed):
    rng = np.random.default_rng(seed)
    clauses = random_3sat(8, 20, rng)
    inst = embed_csp([sat_clause(c) for c in clauses], n=8)
    lam = np.linalg.eigvalsh(full_matrix(inst))[0]
    assert abs(lam - min_unsat(8, clauses)) < 1e-8


def test_csp_arity_overflow():
    with pytest.raises(ValueError, match="arity"):
        embed_csp([sat_clause([1, 2, 3])], n=3, k=2)


def test_complement_is_max_form():
    inst = embed_csp([sat_clause([1, 2])], n=2)
    np.testing.assert_array_equal(complement(inst).terms[0].matrix, np.diag([0, 1, 1, 1]))


def test_dimacs_parse():
    n, cl = parse_dimacs("c demo\np cnf 3 2\n1 -2 0\n2 3\n0\n")
    assert n == 3 and cl == [[1, -2], [2, 3]]
    with pytest.raises(ParseError):
        parse_dimacs("1 2 0\n")
    with pytest.raises(ParseError, match="above 2"):
        parse_dimacs("p cnf 2 1\n1 3 0\n")


def test_densify_examples():
    empty = LocalHamiltonianInstance(0, 2, 2, ())
    dense = densify(empty, 3)
    assert len(dense.terms) == 3
    w, v = np.linalg.eigh(full_matrix(dense))
    assert w[-1] == pytest.approx(3) and abs(v[0, -1]) == pytest.approx(1)
    padded = densify(epr_instance(), 4)
    assert np.linalg.eigvalsh(full_matrix(padded))[-1] == pytest.approx(7)
    assert density_value(padded) >= 6 / 4
    assert validate(padded) == []
    assert len(padded.terms) == 1 + 6


def test_serialize_roundtrip_bit_exact():
    inst = gen_random_dense(4, 3, 2, 5)
    back = parse(serialize(inst))
    assert (back.n, back.d, back.k) == (4, 3, 2)
    for a, b in zip(inst.terms, back.terms):
        assert a.support == b.support
        assert a.matrix.tobytes() == b.matrix.tobytes()
    assert serialize(back) == serialize(inst)


def test_parse_handwritten_fixture():
    text = '{"n":2,"d":2,"k":2,"terms":[{"sites":[0,1],"matrix":[[[1,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]]]}]}'
    inst = parse(text)
    assert inst.terms[0].support == (0, 1)
    np.testing.assert_array_equal(inst.terms[0].matrix, P00)


@pytest.mark.parametrize(
    "text,where",
    [
        ('{"n":2,"d":2,"k":2,"terms":[', "line 1"),
        ('{"n":2,"d":2,"terms":[]}', "missing key 'k'"),
        ('{"n":2,"d":2,"k":2,"terms":[{"sites":[0],"matrix":[[[1,0]],[[0,0]]]}]}', "terms[0].matrix[0]"),
        ('{"n":2,"d":2,"k":2,"terms":[{"sites":[1,0],"matrix":[[[1,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0],[0,0]]]}]}', "terms[0]"),
    ],
)
def test_parse_errors_name_location(text, where):
    with pytest.raises(ParseError) as exc:
        parse(text)
    assert where in str(exc.value)


def test_serialized_doubles_use_17_digits():
    inst = single_term_instance(np.diag([1 / 3, 0.1]), (0,), 1, 2)
    obj = json.loads(serialize(inst))
    assert obj["terms"][0]["matrix"][0][0][0] == 1 / 3
    assert "0.33333333333333331" in serialize(inst).decode()
