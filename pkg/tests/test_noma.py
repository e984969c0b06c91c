from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risnoma.noma import (DecodingOrder, PowerAllocation, best_order, evaluate_order, joint_power_menu, level_mask,
                          oma_rate, order_feasible, power_levels, rate, sic_fairness_ok, sinr)


def oracle_rates(perm, g, p, noise):
    """Rates straight from the SINR definition; robot k's interferers are those decoded after it."""
    out = {}
    for pos, k in enumerate(perm):
        later = perm[pos + 1:]
        s = g[k] * p[k] / (g[k] * math.fsum(p[j] for j in later) + noise)
        out[k] = math.log2(1 + s)
    return [out[k] for k in range(len(perm))]


def oracle_feasible(perm, g, p, noise):
    for pos, i in enumerate(perm):
        interf = math.fsum(p[k] for k in perm[pos + 1:])
        own = math.log2(1 + g[i] * p[i] / (g[i] * interf + noise))
        for j in perm[pos + 1:]:
            if math.log2(1 + g[j] * p[i] / (g[j] * interf + noise)) < own:
                return False
    return True


def oracle_best(g, p, noise):
    cands = []
    for perm in itertools.permutations(range(len(g))):
        r = oracle_rates(perm, g, p, noise)
        cands.append((math.fsum(r), perm, oracle_feasible(perm, g, p, noise)))
    feasible = [c for c in cands if c[2]] or cands
    best = max(c[0] for c in feasible)
    return min(c[1] for c in feasible if c[0] == best), best


# -- SINR and rate -------------------------------------------------------------------------

def test_single_robot_sinr():
    assert sinr(0, DecodingOrder((0,)), [1.0], [1.0], 1.0) == 1.0


def test_worked_two_robot_instance():
    order = DecodingOrder((1, 0))     # robot 2 decoded first
    g, p = [1.0, 0.25], (0.2, 0.8)
    assert sinr(1, order, g, p, 1.0) == pytest.approx(0.2 / 1.05, abs=1e-15)
    assert sinr(1, order, g, p, 1.0) == pytest.approx(0.19048, abs=1e-5)
    assert sinr(0, order, g, p, 1.0) == pytest.approx(0.2, abs=1e-15)


def test_last_decoded_ignores_others():
    order = DecodingOrder((0, 1, 2))
    a = sinr(2, order, [0.3, 0.5, 0.7], [0.1, 0.2, 0.3], 0.01)
    b = sinr(2, order, [0.3, 0.5, 0.7], [9.0, 4.0, 0.3], 0.01)
    assert a == b


@pytest.mark.parametrize("s,want", [(0, 0.0), (1, 1.0), (3, 2.0)])
def test_rate_goldens(s, want):
    assert rate(s) == want


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_rate_monotone(a, b):
    a, b = sorted((a, b))
    assert rate(a) <= rate(b)
    if b - a > 1e-9 * (1 + b):
        assert rate(a) < rate(b)


gain = st.floats(1e-4, 10.0)
power = st.floats(0.0, 5.0)


@given(st.lists(gain, min_size=3, max_size=3), st.lists(power, min_size=3, max_size=3), st.floats(0.01, 2.0))
def test_first_decoded_hurt_by_extra_power(g, p, bump):
    order = DecodingOrder((0, 1, 2))
    base = sinr(0, order, g, p, 0.1)
    more = list(p)
    more[2] += bump
    assert sinr(0, order, g, more, 0.1) <= base


@given(st.lists(gain, min_size=3, max_size=3), st.lists(st.floats(0.01, 5.0), min_size=3, max_size=3),
       st.integers(-10, 10), st.permutations(range(3)))
def test_common_scaling_invariant(g, p, k, perm):
    c = 2.0 ** k    # exact in binary floating point
    order = DecodingOrder(tuple(perm))
    for i in range(3):
        assert sinr(i, order, g, p, 0.1) == sinr(i, order, g, [c * v for v in p], c * 0.1)
    assert best_order(g, p, 0.1)[0] == best_order(g, [c * v for v in p], c * 0.1)[0]


# -- SIC fairness --------------------------------------------------------------------------

def test_fairness_equal_channels():
    order = DecodingOrder((0, 1))
    assert sic_fairness_ok(0, 1, order, [0.5, 0.5], [0.7, 0.3], 0.1)


def test_fairness_strong_later_decoder():
    g, p = [0.1, 5.0], [0.8, 0.2]
    order = DecodingOrder((0, 1))
    # R_{0->1} and R_{0->0} by hand
    r_at_1 = math.log2(1 + 5.0 * 0.8 / (5.0 * 0.2 + 0.1))
    r_at_0 = math.log2(1 + 0.1 * 0.8 / (0.1 * 0.2 + 0.1))
    assert r_at_1 >= r_at_0
    assert sic_fairness_ok(0, 1, order, g, p, 0.1)


def test_fairness_weak_later_decoder():
    g, p = [5.0, 0.1], [0.8, 0.2]
    r_at_1 = math.log2(1 + 0.1 * 0.8 / (0.1 * 0.2 + 0.1))
    r_at_0 = math.log2(1 + 5.0 * 0.8 / (5.0 * 0.2 + 0.1))
    assert r_at_1 < r_at_0
    assert not sic_fairness_ok(0, 1, DecodingOrder((0, 1)), g, p, 0.1)


def test_fairness_requires_decode_precedence():
    with pytest.raises(ValueError):
        sic_fairness_ok(1, 0, DecodingOrder((0, 1)), [1, 1], [0.5, 0.5], 1.0)


# -- order search --------------------------------------------------------------------------

def test_single_robot_identity():
    assert best_order([0.3], [1.0], 0.1)[0] == DecodingOrder((0,))


def test_two_robot_search_picks_higher_sum():
    g, p = [1.0, 0.25], [0.2, 0.8]
    sums = {perm: math.fsum(oracle_rates(perm, g, p, 1.0)) for perm in [(0, 1), (1, 0)]}
    feas = {perm: oracle_feasible(perm, g, p, 1.0) for perm in sums}
    pool = [k for k in sums if feas[k]] or list(sums)
    want = max(pool, key=lambda k: (sums[k], [-v for v in k]))
    order, total, _ = best_order(g, p, 1.0)
    assert order.order == want and total == sums[want]


@pytest.mark.parametrize("x", [2, 3, 4])
def test_oracle_equivalence_randomized(x):
    rng = np.random.default_rng(100 + x)
    for _ in range(100):
        g = list(rng.exponential(1.0, x))
        p = list(rng.uniform(0.01, 1.0, x))
        order, total, report = best_order(g, p, 0.05)
        want_perm, want_total = oracle_best(g, p, 0.05)
        assert order.order == want_perm
        assert total == want_total
        assert report.sum_rate == math.fsum(report.per_robot_rate)


def test_tie_goes_to_lexicographic_first():
    # symmetric instance: swapping robots gives the same sum-rate
    order, _, _ = best_order([1.0, 1.0], [0.5, 0.5], 1.0)
    assert order.order == (0, 1)


@given(st.lists(gain, min_size=2, max_size=4), st.data())
def test_ascending_gain_order_always_feasible(g, data):
    # both sides of the fairness check see the same interference, so weaker-first always passes
    p = data.draw(st.lists(power, min_size=len(g), max_size=len(g)))
    perm = tuple(sorted(range(len(g)), key=lambda i: g[i]))
    assert oracle_feasible(perm, g, p, 0.1)
    assert best_order(g, p, 0.1)[2].sic_feasible


def test_cap_enforced():
    with pytest.raises(ValueError, match="cap"):
        best_order([1.0] * 4, [0.1] * 4, 1.0, max_robots=3)


def test_order_feasible_matches_pairwise():
    rng = np.random.default_rng(5)
    for _ in range(200):
        g, p = list(rng.exponential(1.0, 3)), list(rng.uniform(0.0, 1.0, 3))
        perm = tuple(rng.permutation(3).tolist())
        assert order_feasible(DecodingOrder(perm), g, p, 0.1) == oracle_feasible(perm, g, p, 0.1)


def test_evaluate_order_qos_flags():
    rep = evaluate_order(DecodingOrder((0, 1)), [1.0, 1.0], [0.5, 0.5], 1.0, qos=0.5)
    assert rep.qos_met == (False, True)


# -- OMA and power menu --------------------------------------------------------------------

def test_oma_single_robot_matches_noma():
    assert oma_rate([0.4], [2.0], 0.5).sum_rate == best_order([0.4], [2.0], 0.5)[1]


def test_oma_two_equal_robots():
    rep = oma_rate([0.3, 0.3], [1.0, 1.0], 0.2)
    want = 0.5 * math.log2(1 + 2 * 1.0 * 0.3 / 0.2)
    assert rep.per_robot_rate == pytest.approx((want, want), rel=1e-15)


def test_noma_beats_oma_on_menu():
    levels = power_levels(1.0, [0.1, 0.2, 0.3, 0.4])
    g = [2.0, 0.2]
    menu = joint_power_menu(levels, 2, 1.0)
    best_noma = max(best_order(g, levels[list(c)], 0.01)[1] for c in menu)
    best_oma = max(oma_rate(g, levels[list(c)], 0.01).sum_rate for c in menu)
    assert best_noma >= best_oma


def test_power_allocation_budget():
    with pytest.raises(ValueError, match="budget"):
        PowerAllocation((0.6, 0.6), 1.0)
    with pytest.raises(ValueError, match="negative"):
        PowerAllocation((-0.1, 0.5), 1.0)


@given(st.integers(1, 4), st.floats(0.1, 10.0))
def test_menu_respects_budget(x, budget):
    levels = power_levels(budget, [0.1, 0.2, 0.3, 0.4])
    for combo in joint_power_menu(levels, x, budget):
        assert math.fsum(levels[list(combo)]) <= budget * (1 + 1e-12)


@given(st.integers(1, 4), st.data())
def test_sequential_masks_never_dead_end(x, data):
    levels = power_levels(1.0, [0.1, 0.2, 0.3, 0.4])
    committed = 0.0
    for i in range(x):
        mask = level_mask(levels, committed, 1.0, x - i - 1)
        assert mask.any()
        k = data.draw(st.sampled_from(np.flatnonzero(mask).tolist()))
        committed += levels[k]
    assert committed <= 1.0 + 1e-12


def test_fallback_when_no_order_feasible(monkeypatch):
    import risnoma.noma as noma
    real = noma._perm_rates
    monkeypatch.setattr(noma, "_perm_rates", lambda *a: (real(*a)[0], False))
    g, p = [0.2, 1.5, 0.7], [0.3, 0.3, 0.3]
    order, total, report = best_order(g, p, 0.1)
    assert not report.sic_feasible
    assert total == max(math.fsum(oracle_rates(q, g, p, 0.1)) for q in itertools.permutations(range(3)))
