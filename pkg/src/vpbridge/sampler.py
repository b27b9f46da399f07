"""Reverse-time generation from the source prior to the predicted target.

Each step predicts the clean target from the network velocity, then draws the
next state from the Gaussian bridge posterior q(z_t' | z_t, z0_hat).  Under the
driftless clock s = sigma^2, conditioning a Brownian path on its value at
s=0 and s=s_t gives

    w1 = s_t' / s_t,  w2 = 1 - w1,  w3 = sqrt(s_t' (1 - s_t' / s_t)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bridge import recover_target
from .schedule import NoiseSchedule, make_time_grid

T_CLAMP = 1.0 - 1e-4


class NonFiniteStateError(RuntimeError):
    """Raised when a sampling chain produces NaN or inf."""


@dataclass(frozen=True)
class SolverWeights:
    w1: float
    w2: float
    w3: float


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    t_max: float = T_CLAMP
    stochastic: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 < self.t_max <= 1.0:
            raise ValueError("t_max must lie in (0, 1]")


def posterior_weights(t: float, t_next: float, s: NoiseSchedule) -> SolverWeights:
    if not 0.0 <= t_next < t <= 1.0:
        raise ValueError(f"need 0 <= t_next < t <= 1, got t={t}, t_next={t_next}")
    var = s.sigma_sq(t)
    var_next = s.sigma_sq(t_next)
    ratio = var_next / var
    w3 = np.sqrt(max(var_next * (1.0 - ratio), 0.0))
    return SolverWeights(w1=float(ratio), w2=float(1.0 - ratio), w3=float(w3))


def sde_step(z, z0_hat, t: float, t_next: float, noise, s: NoiseSchedule):
    if np.shape(z) != np.shape(z0_hat) or np.shape(z) != np.shape(noise):
        raise ValueError(
            f"shape mismatch: {np.shape(z)}, {np.shape(z0_hat)}, {np.shape(noise)}"
        )
    w = posterior_weights(t, t_next, s)
    return w.w1 * z + w.w2 * z0_hat + w.w3 * noise


def bridge_chain(
    z_src,
    predict_target: Callable[[np.ndarray, float], np.ndarray],
    cfg: SamplerConfig,
    s: NoiseSchedule,
    on_step: Callable[[int, float, np.ndarray], None] | None = None,
):
    """Run the posterior-step chain from z_src with an arbitrary z0 predictor.

    ``predict_target(z, t_eval)`` is called with t clamped to ``cfg.t_max``;
    solver weights always use the unclamped grid.  ``on_step(k, t_next, z)``
    sees the state after every step.
    """
    grid = make_time_grid(cfg.steps, 1.0)
    rng = np.random.default_rng(cfg.seed)
    z = np.array(z_src, copy=True)
    for k, (t, t_next) in enumerate(grid.pairs()):
        z0_hat = predict_target(z, min(t, cfg.t_max))
        if np.shape(z0_hat) != np.shape(z):
            raise ValueError(f"predicted target shape {np.shape(z0_hat)} != state shape {z.shape}")
        if t_next == 0.0:
            z = np.array(z0_hat, copy=True)
        else:
            w = posterior_weights(t, t_next, s)
            z = w.w1 * z + w.w2 * z0_hat
            if cfg.stochastic:
                z = z + w.w3 * rng.standard_normal(z.shape).astype(z.dtype, copy=False)
        if not np.all(np.isfinite(z)):
            raise NonFiniteStateError(f"non-finite state after step {k} (t={t_next})")
        if on_step is not None:
            on_step(k, t_next, z)
    return z


def sample(model, z_src, cond, cfg: SamplerConfig, s: NoiseSchedule, on_step=None):
    """Generate the target from ``z_src`` with a velocity model.

    ``model(z, t, cond)`` must return a velocity with the shape of ``z``.
    """
    z_src = np.asarray(z_src)

    def predict_target(z, t):
        v_hat = model(z, t, cond)
        if np.shape(v_hat) != np.shape(z):
            raise RuntimeError(f"model output shape {np.shape(v_hat)} != state shape {np.shape(z)}")
        return recover_target(z, v_hat, z_src, t, s)

    return bridge_chain(z_src, predict_target, cfg, s, on_step=on_step)
