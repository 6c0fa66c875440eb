"""Hard-instance families and their structural identities."""

import itertools
import math

import numpy as np
import pytest

from condtest.adversarial import (
    AdversarialInstance,
    GridProductDistance,
    MAX_PAIR_DELTA,
    PairBias,
    ProductSampler,
    distance_to_grid_products,
    distance_to_product_of_marginals,
    nu_b_table,
    odd_coordinate_marginals,
    pairwise_product_distance_bound,
    sample_paired_instance,
    simulate_pair_conditional,
    subcube_query_via_unconditional,
    uniformity_lb_instance,
    xor_transform,
)
from condtest.distcore import DistributionTable, DomainError, tv_distance
from condtest.oracles import SubcubeQuery, TableOracle


PAIR_PATTERNS = ["**", "0*", "1*", "*0", "*1", "00", "01", "10", "11"]


# ----------------------------------------------------------------------
# the biased pair


def test_nu_zero_is_uniform():
    np.testing.assert_allclose(nu_b_table(0, 0.2).probs, 0.25, atol=1e-15)


def test_nu_plus_one_cells():
    np.testing.assert_allclose(nu_b_table(1, 0.1).probs,
                               [0.35, 0.15, 0.15, 0.35], atol=1e-15)
    np.testing.assert_allclose(nu_b_table(-1, 0.1).probs,
                               [0.15, 0.35, 0.35, 0.15], atol=1e-15)


def test_nu_marginals_exactly_half():
    for b in (-1, 0, 1):
        np.testing.assert_array_equal(nu_b_table(b, 0.2).marginals(), [0.5, 0.5])


def test_pair_bias_validation():
    with pytest.raises(DomainError):
        PairBias(2, 0.1)
    with pytest.raises(DomainError):
        nu_b_table(1, MAX_PAIR_DELTA)
    with pytest.raises(DomainError):
        nu_b_table(1, -0.01)


# ----------------------------------------------------------------------
# paired instances


def test_instance_table_and_delta():
    inst = AdversarialInstance(4, 0.2, (1, -1))
    assert inst.delta == pytest.approx(0.1)
    assert inst.n_pairs == 2
    expect = np.kron(nu_b_table(1, 0.1).probs, nu_b_table(-1, 0.1).probs)
    np.testing.assert_allclose(inst.table().probs, expect, atol=1e-15)


def test_instance_odd_dimension_appends_uniform_bit():
    inst = AdversarialInstance(3, 0.1, (1,))
    probs = inst.table().probs
    delta = 0.1 / math.sqrt(3)
    expect = np.kron(nu_b_table(1, delta).probs, [0.5, 0.5])
    np.testing.assert_allclose(probs, expect, atol=1e-15)
    np.testing.assert_allclose(inst.table().marginals(), 0.5, atol=1e-15)


def test_instance_marginals_all_half():
    inst = AdversarialInstance(6, 0.3, (1, -1, 1))
    np.testing.assert_allclose(inst.table().marginals(), 0.5, atol=1e-15)


def test_instance_validation():
    with pytest.raises(DomainError):
        AdversarialInstance(4, 0.2, (1,))
    with pytest.raises(DomainError):
        AdversarialInstance(4, 0.2, (1, 0))
    with pytest.raises(DomainError):
        AdversarialInstance(2, 0.5, (1,))  # delta = 0.5/sqrt(2) >= 1/4


def test_instance_json_round_trip():
    inst = AdversarialInstance(8, 0.3, (1, -1, -1, 1))
    again = AdversarialInstance.from_json(inst.to_json())
    assert again == inst


def test_sample_paired_instance(rng):
    inst = sample_paired_instance(8, 0.4, rng)
    assert inst.n == 8 and len(inst.biases) == 4
    assert all(b in (-1, 1) for b in inst.biases)


def test_draw_unconditional_law(rng):
    inst = AdversarialInstance(4, 0.2, (1, -1))
    counts = np.zeros(16)
    for _ in range(20000):
        x = inst.draw_unconditional(rng)
        counts[int("".join(map(str, x)), 2)] += 1
    emp = counts / counts.sum()
    assert np.abs(emp - inst.table().probs).max() < 0.02


# ----------------------------------------------------------------------
# pair-conditional simulation


def test_pair_simulation_trivial_queries():
    assert simulate_pair_conditional("**", (1, 0)) == (1, 0)
    assert simulate_pair_conditional("01", (1, 1)) == (0, 1)
    # x = 11 has even parity, so conditioning on first bit 0 lands on 00
    assert simulate_pair_conditional("0*", (1, 1)) == (0, 0)
    assert simulate_pair_conditional("0*", (1, 0)) == (0, 1)


def test_pair_simulation_pushforward_is_exact():
    """For every query shape and every bias sign, the deterministic map
    applied to a nu_b sample has exactly the conditional law."""
    for pattern in PAIR_PATTERNS:
        q = SubcubeQuery.from_pattern(pattern)
        for b in (-1, 0, 1):
            table = nu_b_table(b, 0.1)
            mass = {}
            for cell in range(4):
                x = (cell >> 1, cell & 1)
                out = simulate_pair_conditional(q, x)
                mass[out] = mass.get(out, 0.0) + table.probs[cell]
            in_cube = [cell for cell in range(4)
                       if q.contains((cell >> 1, cell & 1))]
            total = sum(table.probs[c] for c in in_cube)
            for cell in range(4):
                x = (cell >> 1, cell & 1)
                want = table.probs[cell] / total if q.contains(x) else 0.0
                assert mass.get(x, 0.0) == pytest.approx(want, abs=1e-12), \
                    (pattern, b, x)


def test_pair_simulation_rejects_wrong_width():
    with pytest.raises(DomainError):
        simulate_pair_conditional("0**", (0, 1))


def test_subcube_query_via_unconditional_law(rng):
    inst = AdversarialInstance(4, 0.2, (1, -1))
    q = SubcubeQuery.from_pattern("0**1")
    table = inst.table()
    idx = np.arange(16)
    member = np.array([q.contains(tuple((i >> s) & 1 for s in (3, 2, 1, 0)))
                       for i in idx])
    cond = np.where(member, table.probs, 0.0)
    cond /= cond.sum()
    counts = np.zeros(16)
    for _ in range(20000):
        out = subcube_query_via_unconditional(q, inst, rng)
        assert q.contains(out)
        counts[int("".join(map(str, out)), 2)] += 1
    emp = counts / counts.sum()
    assert np.abs(emp - cond).max() < 0.02


def test_subcube_query_via_unconditional_odd_n(rng):
    inst = AdversarialInstance(3, 0.1, (1,))
    out = subcube_query_via_unconditional(SubcubeQuery.from_pattern("*11"),
                                          inst, rng)
    assert out[1:] == (1, 1)
    with pytest.raises(DomainError):
        subcube_query_via_unconditional(SubcubeQuery.from_pattern("**"),
                                        inst, rng)


# ----------------------------------------------------------------------
# the pairwise XOR change of variables


def test_xor_sends_biased_pair_to_product():
    # parity bit becomes the first coordinate: Ber(1/2 - 2*b*delta) x Ber(1/2)
    got = xor_transform(nu_b_table(1, 0.1))
    np.testing.assert_allclose(
        got.probs, DistributionTable.bernoulli_product([0.3, 0.5]).probs,
        atol=1e-15)
    got = xor_transform(nu_b_table(-1, 0.1))
    np.testing.assert_allclose(
        got.probs, DistributionTable.bernoulli_product([0.7, 0.5]).probs,
        atol=1e-15)


def test_xor_fixes_uniform():
    for n in (2, 4, 6):
        u = DistributionTable.uniform(n)
        np.testing.assert_allclose(xor_transform(u).probs, u.probs, atol=1e-15)


def test_xor_is_involution(rng):
    from conftest import random_table
    for n in (2, 4, 6):
        t = random_table(rng, n, zeros=True)
        np.testing.assert_allclose(xor_transform(xor_transform(t)).probs,
                                   t.probs, atol=1e-12)


def test_xor_requires_even_dimension():
    with pytest.raises(DomainError):
        xor_transform(DistributionTable.uniform(3))


def test_xor_odd_coordinate_marginals_carry_bias():
    inst = AdversarialInstance(6, 0.3, (1, -1, 1))
    delta = inst.delta
    got = odd_coordinate_marginals(xor_transform(inst.table()))
    expect = np.array([0.5 - 2 * b * delta for b in inst.biases])
    np.testing.assert_allclose(got, expect, atol=1e-12)


# ----------------------------------------------------------------------
# uniformity hard instances


def test_uniformity_instance_eps_zero_is_uniform(rng):
    t = uniformity_lb_instance(4, 0.0, rng)
    np.testing.assert_allclose(t.probs, DistributionTable.uniform(4).probs,
                               atol=1e-15)


def test_uniformity_instance_single_bit(rng):
    t = uniformity_lb_instance(1, 0.3, rng)
    p = t.marginals()[0]
    assert p == pytest.approx(0.5 + 0.3) or p == pytest.approx(0.5 - 0.3)


def test_uniformity_instance_large_n_is_implicit(rng):
    s = uniformity_lb_instance(30, 0.5, rng)
    assert isinstance(s, ProductSampler)
    draws = s.draw(rng, 4000)
    assert draws.shape == (4000, 30)
    emp = draws.mean(axis=0)
    expect = np.asarray(s.ps)
    assert np.abs(emp - expect).max() < 0.05


def test_uniformity_instance_bias_guard(rng):
    with pytest.raises(DomainError):
        uniformity_lb_instance(1, 0.5, rng)


# ----------------------------------------------------------------------
# distance to product distributions


def test_grid_distance_zero_for_products():
    prod = DistributionTable.bernoulli_product([0.3, 0.7])
    res = distance_to_grid_products(prod, step=0.01)
    assert res.distance == pytest.approx(0.0, abs=1e-12)
    assert res.method == "exact-grid"
    assert res.marginals == pytest.approx((0.3, 0.7))


def test_grid_distance_correlated_pair():
    """Perfectly correlated bits against a direct two-marginal sweep."""
    tab = DistributionTable(2, [0.5, 0.0, 0.0, 0.5])
    grid = np.round(np.arange(0.0, 1.0001, 0.01), 12)
    best = min(
        0.5 * np.abs(tab.probs - np.kron([1 - a, a], [1 - b, b])).sum()
        for a in grid for b in grid)
    res = distance_to_grid_products(tab, step=0.01)
    assert res.distance == pytest.approx(best, abs=1e-12)
    assert res.distance > 0.25


def test_grid_distance_refuses_large_n():
    with pytest.raises(DomainError):
        distance_to_grid_products(DistributionTable.uniform(5))


def test_grid_distance_matches_brute_force_on_pair(rng):
    """Cross-check the split-half search against a direct loop at n = 2."""
    from conftest import random_table
    tab = random_table(rng, 2)
    grid = np.round(np.arange(0.0, 1.0001, 0.05), 12)
    best = min(
        0.5 * np.abs(tab.probs
                     - np.kron([1 - a, a], [1 - b, b])).sum()
        for a in grid for b in grid)
    res = distance_to_grid_products(tab, step=0.05)
    assert res.distance == pytest.approx(best, abs=1e-12)


def test_pairwise_bound_is_a_true_lower_bound():
    inst = AdversarialInstance(4, 0.2, (1, -1))
    exact = distance_to_grid_products(inst.table(), step=0.01)
    bound = pairwise_product_distance_bound(inst, step=0.01)
    assert bound.method == "pairwise-lower-bound"
    assert bound.distance <= exact.distance + 1e-12
    assert bound.distance > 0.01


def test_distance_to_own_marginal_product():
    inst = AdversarialInstance(4, 0.2, (1, -1))
    d = distance_to_product_of_marginals(inst.table())
    # product of marginals is uniform; dtv(nu_b, uniform) = 2*delta per pair
    single = tv_distance(nu_b_table(1, 0.1), DistributionTable.uniform(2))
    assert single == pytest.approx(0.2)
    assert d > single - 1e-12
    assert d == pytest.approx(
        tv_distance(inst.table(), DistributionTable.uniform(4)), abs=1e-12)
