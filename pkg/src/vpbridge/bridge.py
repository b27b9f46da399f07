"""Closed-form bridge math: marginal sampling, velocity targets, score,
guidance term, target recovery and an Euler-Maruyama simulation oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule, coefficients_at


@dataclass(frozen=True)
class BridgeState:
    z: np.ndarray
    t: float


def _same_shape(*arrays):
    shape = np.shape(arrays[0])
    for arr in arrays[1:]:
        if np.shape(arr) != shape:
            raise ValueError(f"shape mismatch: {shape} vs {np.shape(arr)}")


def interpolate(z_tgt, z_src, t: float, eps, s: NoiseSchedule):
    """Sample z_t = a_t z_tgt + b_t z_src + c_t eps."""
    _same_shape(z_tgt, z_src, eps)
    k = coefficients_at(s, t)
    return k.a * np.asarray(z_tgt) + k.b * np.asarray(z_src) + k.c * np.asarray(eps)


def brownian_interpolate(x0, x1, t: float, eps):
    """Plain Brownian bridge: (1-t) x0 + t x1 + sqrt(t(1-t)) eps."""
    _same_shape(x0, x1, eps)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time must lie in [0, 1], got {t}")
    return (1.0 - t) * np.asarray(x0) + t * np.asarray(x1) + np.sqrt(t * (1.0 - t)) * np.asarray(eps)


def velocity_target(z_tgt, eps, t: float, s: NoiseSchedule):
    """u_t = (a_t eps - c_t z_tgt) / rho_t."""
    _same_shape(z_tgt, eps)
    k = coefficients_at(s, t)
    if k.rho == 0.0:
        raise ValueError(f"velocity target undefined at t={t} (rho_t = 0)")
    return (k.a / k.rho) * np.asarray(eps) - (k.c / k.rho) * np.asarray(z_tgt)


def analytic_score(z_t, z_tgt, z_src, t: float, s: NoiseSchedule):
    """Score of the Gaussian bridge marginal, -(z_t - mu_t) / c_t^2."""
    _same_shape(z_t, z_tgt, z_src)
    k = coefficients_at(s, t)
    if k.c == 0.0:
        raise ValueError(f"bridge marginal is degenerate at t={t} (c_t = 0)")
    mean = k.a * np.asarray(z_tgt) + k.b * np.asarray(z_src)
    return -(np.asarray(z_t) - mean) / (k.c * k.c)


def guidance_h(z_t, z_src, t: float, s: NoiseSchedule):
    """Gradient of log p(z_src | z_t) for the driftless process:
    (z_src - z_t) / sigma_bar_t^2."""
    _same_shape(z_t, z_src)
    var_bar = s.sigma_bar_sq(t)
    if var_bar <= 0.0:
        raise ValueError(f"guidance term undefined at t={t} (sigma_bar_t = 0)")
    return (np.asarray(z_src) - np.asarray(z_t)) / var_bar


def recover_target(z_t, v_hat, z_src, t: float, s: NoiseSchedule):
    """Invert the velocity parameterization for the predicted clean target.

    z0 = (a/rho^2) z_t - (a b / rho^2) z_src - (c / rho) v_hat
    """
    _same_shape(z_t, v_hat, z_src)
    k = coefficients_at(s, t)
    if k.c == 0.0 or k.rho == 0.0:
        raise ValueError(f"target recovery undefined at t={t} (c_t or rho_t = 0)")
    rho_sq = k.rho * k.rho
    return (
        (k.a / rho_sq) * np.asarray(z_t)
        - (k.a * k.b / rho_sq) * np.asarray(z_src)
        - (k.c / k.rho) * np.asarray(v_hat)
    )


def simulate_forward_bridge(
    z_tgt,
    z_src,
    n_steps: int,
    s: NoiseSchedule,
    seed=0,
    record_at=None,
) -> list[BridgeState]:
    """Euler-Maruyama paths of dz = g^2 h dt + g dw from z_tgt at t=0 to z_src.

    Every entry of ``z_tgt`` is an independent path.  ``record_at`` selects the
    times (snapped to the uniform grid) to keep; by default every grid point is
    kept.  Only meant as a Monte-Carlo oracle for the closed-form marginal.
    """
    if n_steps < 10:
        raise ValueError("n_steps must be at least 10")
    z_tgt = np.asarray(z_tgt, dtype=np.float64)
    z_src = np.broadcast_to(np.asarray(z_src, dtype=np.float64), z_tgt.shape)
    rng = np.random.default_rng(seed)
    dt = 1.0 / n_steps
    if record_at is None:
        keep = set(range(n_steps + 1))
    else:
        keep = {int(round(float(t) * n_steps)) for t in record_at}

    z = z_tgt.copy()
    out = [BridgeState(z.copy(), 0.0)] if 0 in keep else []
    for k in range(n_steps):
        t = k * dt
        g_sq = s.g_sq(t)
        drift = g_sq * (z_src - z) / s.sigma_bar_sq(t)
        z = z + drift * dt + np.sqrt(g_sq * dt) * rng.standard_normal(z.shape)
        if k + 1 in keep:
            out.append(BridgeState(z.copy(), (k + 1) / n_steps))
    return out
