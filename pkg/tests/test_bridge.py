import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpbridge.bridge import (
    analytic_score,
    brownian_interpolate,
    guidance_h,
    interpolate,
    recover_target,
    simulate_forward_bridge,
    velocity_target,
)
from vpbridge.schedule import NoiseSchedule, coefficients_at

S = NoiseSchedule()

# Frozen oracle values (quadrature schedule, see test_schedule.py).
B_HALF = 0.2500999800039992
# u = (a eps - c z_tgt) / rho with z_tgt=2, eps=1 at t=0.5
U_HALF = (0.7499000199960009 - 0.43307040998664226 * 2) / 0.8659676783783566


def test_frozen_velocity_value():
    assert U_HALF == pytest.approx(-0.13423226164163604, rel=1e-12)


def test_interpolate_boundaries():
    eps = np.array([3.7])
    assert interpolate(np.zeros(1), np.ones(1), 0.0, eps, S)[0] == 0.0
    assert interpolate(np.zeros(1), np.ones(1), 1.0, eps, S)[0] == 1.0


def test_interpolate_midpoint():
    out = interpolate(np.zeros(1), np.ones(1), 0.5, np.zeros(1), S)
    assert out[0] == pytest.approx(B_HALF, rel=1e-12)


def test_interpolate_shape_mismatch():
    with pytest.raises(ValueError):
        interpolate(np.zeros(3), np.zeros(3), 0.5, np.zeros(4), S)


@pytest.mark.parametrize(
    "x0, x1, t, eps, expected",
    [(2.0, 4.0, 0.5, 0.0, 3.0), (2.0, 4.0, 0.0, 7.0, 2.0), (0.0, 0.0, 0.5, 1.0, 0.5)],
)
def test_brownian_interpolate(x0, x1, t, eps, expected):
    assert brownian_interpolate(x0, x1, t, eps) == pytest.approx(expected, abs=1e-15)


def test_velocity_examples():
    eps = np.array([0.3, -1.2])
    np.testing.assert_array_equal(velocity_target(np.array([5.0, 1.0]), eps, 0.0, S), eps)
    assert velocity_target(np.array([2.0]), np.array([1.0]), 0.5, S)[0] == pytest.approx(U_HALF, rel=1e-12)


def test_velocity_limit_near_one():
    u = velocity_target(np.array([2.0]), np.array([1.0]), 1.0 - 1e-6, S)
    assert u[0] == pytest.approx(-2.0, abs=2e-3)


def test_velocity_undefined_at_one():
    with pytest.raises(ValueError):
        velocity_target(np.ones(2), np.ones(2), 1.0, S)


def test_analytic_score_examples():
    k = coefficients_at(S, 0.3)
    z_tgt, z_src = np.array([0.4]), np.array([-1.0])
    mu = k.a * z_tgt + k.b * z_src
    assert analytic_score(mu, z_tgt, z_src, 0.3, S)[0] == 0.0
    assert analytic_score(mu + k.c, z_tgt, z_src, 0.3, S)[0] == pytest.approx(-1.0 / k.c, rel=1e-12)
    with pytest.raises(ValueError):
        analytic_score(mu, z_tgt, z_src, 0.0, S)


def test_guidance_h_examples():
    z = np.array([0.7])
    assert guidance_h(z, z, 0.4, S)[0] == 0.0
    # find t with sigma_bar^2 = 2 in raw mode
    raw = NoiseSchedule(normalized=False)
    t = np.sqrt(0.01**2 + 2 * 49.99 * (25.005 - 2.0))
    t = (t - 0.01) / 49.99
    assert raw.sigma_bar_sq(t) == pytest.approx(2.0, rel=1e-12)
    assert guidance_h(np.zeros(1), np.ones(1), t, raw)[0] == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        guidance_h(z, z, 1.0, S)


def test_guidance_matches_score_of_pin():
    # h is the gradient of log N(z_src; z_t, sigma_bar^2) with respect to z_t
    z_t, z_src, t, h = 0.3, -0.5, 0.42, 1e-6
    var = S.sigma_bar_sq(t)

    def logp(z):
        return -0.5 * (z_src - z) ** 2 / var

    numeric = (logp(z_t + h) - logp(z_t - h)) / (2 * h)
    assert guidance_h(np.array([z_t]), np.array([z_src]), t, S)[0] == pytest.approx(numeric, rel=1e-7)


def test_recover_target_examples():
    k = coefficients_at(S, 0.5)
    z_src = np.array([1.3])
    assert recover_target(k.b * z_src, np.zeros(1), z_src, 0.5, S)[0] == pytest.approx(0.0, abs=1e-15)
    assert recover_target(np.ones(1), np.zeros(1), np.zeros(1), 0.5, S)[0] == pytest.approx(1.0, abs=1e-9)
    for t in (0.0, 1.0):
        with pytest.raises(ValueError):
            recover_target(np.ones(1), np.zeros(1), np.zeros(1), t, S)


@settings(max_examples=200)
@given(st.floats(1e-3, 1 - 1e-3), st.integers(0, 2**31), st.booleans())
def test_round_trip_property(t, seed, normalized):
    s = NoiseSchedule(normalized=normalized)
    rng = np.random.default_rng(seed)
    z_tgt, z_src, eps = rng.standard_normal((3, 16))
    z_t = interpolate(z_tgt, z_src, t, eps, s)
    v = velocity_target(z_tgt, eps, t, s)
    np.testing.assert_allclose(recover_target(z_t, v, z_src, t, s), z_tgt, rtol=0, atol=1e-9)


def test_round_trip_insensitive_to_consistent_sign_flip():
    # Flipping c_t in every formula leaves the round trip exact: it is a
    # relabelling eps -> -eps.  Only the Monte-Carlo marginal sees the bug.
    k = coefficients_at(S, 0.4)
    rng = np.random.default_rng(0)
    z_tgt, z_src, eps = rng.standard_normal((3, 8))
    c = -k.c
    z_t = k.a * z_tgt + k.b * z_src + c * eps
    u = (k.a * eps - c * z_tgt) / k.rho
    back = (k.a / k.rho**2) * z_t - (k.a * k.b / k.rho**2) * z_src - (c / k.rho) * u
    np.testing.assert_allclose(back, z_tgt, atol=1e-12)


def test_simulation_requires_enough_steps():
    with pytest.raises(ValueError):
        simulate_forward_bridge(np.zeros(3), np.zeros(3), 5, S)


def test_simulation_records_grid_times():
    states = simulate_forward_bridge(np.zeros(4), np.ones(4), 20, S, record_at=[0.25, 0.5])
    assert [st.t for st in states] == [0.25, 0.5]


def test_simulation_symmetric_pin():
    n = 20_000
    states = simulate_forward_bridge(np.full(n, 0.7), 0.7, 200, S, seed=3)
    end = states[-1].z
    se = max(end.std(), 1e-12) / math.sqrt(n)
    assert abs(end.mean() - 0.7) <= 3 * se + 1e-12


def test_simulation_pin_error_shrinks_with_steps():
    def pin_error(n_steps):
        end = simulate_forward_bridge(np.zeros(5000), 1.0, n_steps, S, seed=1)[-1].z
        return float(np.sqrt(np.mean((end - 1.0) ** 2)))

    assert pin_error(400) < pin_error(50)


def test_simulation_marginal_at_half():
    n = 100_000
    z_tgt, z_src = -1.0, 2.0
    (state,) = simulate_forward_bridge(np.full(n, z_tgt), z_src, 500, S, seed=0, record_at=[0.5])
    k = coefficients_at(S, 0.5)
    se = k.c / math.sqrt(n)
    assert abs(state.z.mean() - (k.a * z_tgt + k.b * z_src)) <= 4 * se
    # std of the sample std is about c / sqrt(2n)
    assert abs(state.z.std() - k.c) <= 4 * k.c / math.sqrt(2 * n)
