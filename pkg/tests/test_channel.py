from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risnoma.channel import (ChannelField, ChannelSettings, PathLossParams, PhaseConfig, block_key, db_to_linear,
                             draw_link, effective_channel, hashed_complex_normals, link_key, path_loss,
                             quantize_phase, rician_factor)

P = PathLossParams()


# -- path loss -----------------------------------------------------------------------------

def test_reference_gain_is_minus_30_db():
    assert db_to_linear(-30.0) == pytest.approx(1e-3, rel=1e-15)
    for gamma in (0.0, 2.2, 2.8, 3.5):
        assert path_loss(1.0, gamma, P) == pytest.approx(1e-3, rel=1e-15)


def test_path_loss_against_high_precision():
    mpmath.mp.dps = 40
    want = mpmath.mpf("1e-3") * mpmath.power(2, mpmath.mpf("-2.2"))
    assert path_loss(2.0, 2.2, P) == pytest.approx(float(want), rel=1e-14)
    assert float(want) == pytest.approx(2.176e-4, rel=1e-3)


def test_zero_exponent_is_flat():
    assert path_loss(10.0, 0.0, P) == pytest.approx(1e-3)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_nonpositive_distance_rejected(d):
    with pytest.raises(ValueError):
        path_loss(d, 2.0, P)


@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0.1, 5))
def test_path_loss_decreasing(d1, d2, gamma):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    assert path_loss(lo, gamma, P) > path_loss(hi, gamma, P)


def test_small_exponent_warns():
    with pytest.warns(UserWarning, match="free-space"):
        PathLossParams(gamma_ai=1.5)


# -- Rician factor -------------------------------------------------------------------------

def test_clear_ap_robot_link(full_grid):
    assert rician_factor(full_grid.ap_pos, (0.5, 5.5, 0.5), full_grid, 3.0) == 3.0


def test_link_through_pillar_is_nlos(full_grid):
    # pillar-3 occupies x 1.5..2.5, y 1.5..2.5 up to 3 m
    assert rician_factor((1.0, 2.0, 0.5), (3.0, 2.0, 0.5), full_grid, 3.0) == 0.0


def test_ap_to_ris_is_los_in_full_scene(full_grid):
    ap, ris = np.array(full_grid.ap_pos), np.array(full_grid.ris_pos)
    # independent check: sample the segment densely against every box interior
    blocked = False
    for t in np.linspace(0, 1, 20001)[1:-1]:
        p = ap + t * (ris - ap)
        for b in full_grid.obstacles:
            if b.x[0] < p[0] < b.x[1] and b.y[0] < p[1] < b.y[1] and 0 < p[2] < b.height:
                blocked = True
    assert not blocked
    assert rician_factor(ap, ris, full_grid, 3.0) == 3.0


# -- draw_link -----------------------------------------------------------------------------

def test_strong_los_limit():
    los = np.exp(1j * np.array([0.1, 0.7, 1.3, 2.0]))
    amp = math.sqrt(path_loss(3.0, 2.8, P))
    devs = []
    for seed in range(200):
        v = draw_link(3.0, 2.8, 1e6, 4, np.random.default_rng(seed), P, los)
        devs.append(np.linalg.norm(v - amp * los) / np.linalg.norm(amp * los))
    assert np.mean(devs) <= 1e-2


def test_blocked_link_is_pure_nlos():
    amp = math.sqrt(path_loss(3.0, 2.8, P))
    v = draw_link(3.0, 2.8, 0.0, 4, np.random.default_rng(11), P)
    rng = np.random.default_rng(11)
    nlos = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / math.sqrt(2)
    np.testing.assert_array_equal(v, amp * nlos)


def test_draw_link_repeatable():
    a = draw_link(2.0, 2.2, 3.0, 4, np.random.default_rng(3), P)
    b = draw_link(2.0, 2.2, 3.0, 4, np.random.default_rng(3), P)
    assert a.tobytes() == b.tobytes()


def test_nlos_mean_vanishes():
    n = 10_000
    draws = np.array([draw_link(1.0, 2.0, 0.0, 2, np.random.default_rng(s), P) for s in range(n)])
    amp = math.sqrt(1e-3)
    se = amp / math.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * se)


# -- hashed fading -------------------------------------------------------------------------

def test_hashed_normals_unit_variance_and_zero_mean():
    z = hashed_complex_normals(block_key(1, 2, 3), np.arange(200_000))
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.mean(z.real ** 2) == pytest.approx(0.5, abs=0.01)
    assert abs(np.mean(z.real * z.imag)) < 0.01


def test_hashed_normals_keyed_not_streamed():
    keys = link_key(np.arange(10), 1, 0)
    block = block_key(7, 1, 0)
    full = hashed_complex_normals(block, keys)
    part = hashed_complex_normals(block, keys[[7, 2]])
    np.testing.assert_array_equal(part, full[[7, 2]])
    assert not np.array_equal(full, hashed_complex_normals(block_key(7, 1, 1), keys))


# -- effective channel and phases ----------------------------------------------------------

def test_scalar_composition():
    assert effective_channel(np.array([1.0]), [0.0], np.array([0.5]), 0.1) == pytest.approx(0.6)


def test_zero_reflection_leaves_direct_path():
    assert effective_channel(np.ones(3), np.zeros(3), np.zeros(3), 0.3 - 0.2j) == 0.3 - 0.2j


def test_two_element_conjugation():
    out = effective_channel(np.array([1, 1]), [0.0, math.pi], np.array([1, -1]), 0)
    assert out == pytest.approx(2.0, abs=1e-15)


def test_conjugates_h():
    out = effective_channel(np.array([1j]), [0.0], np.array([1.0]), 0)
    assert out == pytest.approx(-1j)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError, match="mismatch"):
        effective_channel(np.ones(2), [0.0], np.ones(2), 0)


cplx = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@given(st.lists(cplx, min_size=3, max_size=3), st.lists(cplx, min_size=3, max_size=3), cplx,
       st.lists(st.integers(0, 7), min_size=3, max_size=3))
def test_effective_channel_linear_in_g_and_l(h, g, l, idx):
    ph = PhaseConfig.from_indices(idx, 3, 6, 2)
    one = effective_channel(np.array(h), ph, np.array(g), l)
    two = effective_channel(np.array(h), ph, 2 * np.array(g), 2 * l)
    assert two == pytest.approx(2 * one, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("n0,bits,want", [(0, 3, 0.0), (3, 2, 1.5 * math.pi), (1, 1, math.pi)])
def test_quantize_phase(n0, bits, want):
    assert quantize_phase(n0, bits) == pytest.approx(want)


def test_quantize_phase_range():
    with pytest.raises(ValueError):
        quantize_phase(4, 2)


@given(st.integers(1, 6), st.data())
def test_phase_coefficients_unit_modulus(bits, data):
    idx = data.draw(st.lists(st.integers(0, 2 ** bits - 1), min_size=4, max_size=4))
    ph = PhaseConfig.from_indices(idx, bits, 8, 2)
    np.testing.assert_allclose(np.abs(ph.coefficients), 1.0, rtol=0, atol=1e-15)


def test_off_grid_phase_rejected():
    with pytest.raises(ValueError, match="grid"):
        PhaseConfig(np.array([0.1, 0.0]), 3, 8, 4)


# -- channel field -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def field(desk_grid):
    return ChannelField(desk_grid, ChannelSettings())


CELLS = [(5, 5), (30, 20), (18, 6)]


def test_fast_gains_match_realization(field):
    thetas = np.array([0.5, 2.0])
    for epoch in range(3):
        fast = field.gains(CELLS, thetas, True, 4, 9, epoch)
        full = field.realize(CELLS, 4, 9, epoch).gains(thetas, True)
        np.testing.assert_allclose(fast, full, rtol=1e-12)
        np.testing.assert_allclose(field.gains(CELLS, thetas, False, 4, 9, epoch),
                                   field.realize(CELLS, 4, 9, epoch).gains(thetas, False), rtol=1e-12)


def test_same_block_same_channel(field):
    a = field.realize(CELLS, 1, 2, 3)
    b = field.realize(CELLS[::-1], 1, 2, 3)
    np.testing.assert_array_equal(a.l, b.l[::-1])
    np.testing.assert_array_equal(a.g, b.g[::-1])
    c = field.realize(CELLS, 1, 2, 4)
    assert not np.array_equal(a.l, c.l)
    np.testing.assert_array_equal(a.h, c.h)   # h is fixed for the episode


def test_redraw_h_per_epoch(desk_grid):
    f = ChannelField(desk_grid, ChannelSettings(redraw_ap_ris=True))
    assert not np.array_equal(f.realize(CELLS, 1, 2, 3).h, f.realize(CELLS, 1, 2, 4).h)


def test_no_ris_zeroes_reflection(field):
    ch = field.realize(CELLS, 1, 2, 3)
    np.testing.assert_array_equal(ch.effective(np.zeros(2), ris=False), ch.l)


def test_expected_mode_matches_monte_carlo(desk_grid):
    settings = ChannelSettings(expected=True)
    exp_field = ChannelField(desk_grid, settings)
    mc_field = ChannelField(desk_grid, ChannelSettings())
    thetas = np.array([1.0, 4.0])
    want = exp_field.gains(CELLS, thetas, True, 0, 0, 0)
    draws = np.array([mc_field.gains(CELLS, thetas, True, 0, ep, 0) for ep in range(20_000)])
    np.testing.assert_allclose(draws.mean(axis=0), want, rtol=0.03)
    direct = np.array([mc_field.gains(CELLS, thetas, False, 0, ep, 0) for ep in range(20_000)])
    np.testing.assert_allclose(direct.mean(axis=0), exp_field.gains(CELLS, thetas, False, 0, 0, 0), rtol=0.03)


def test_hashed_normals_independent_of_batch_size():
    keys = link_key(np.arange(300) - 1, 1, 3)
    block = block_key(4, 5, 6)
    full = hashed_complex_normals(block, keys)
    for lo, hi in ((0, 1), (0, 64), (10, 75), (200, 300)):
        assert hashed_complex_normals(block, keys[lo:hi]).tobytes() == full[lo:hi].tobytes()
