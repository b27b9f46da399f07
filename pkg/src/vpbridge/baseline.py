"""Noise-to-data diffusion baseline with the same conditioning and network.

Training corrupts the clean target toward Gaussian noise and regresses the
noise; inference runs deterministic DDIM from pure noise.  The source clip
enters only through the condition y = Concat(mask, z_src).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Batch, forward
from .sampler import NonFiniteStateError


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    betas: np.ndarray = field(init=False, repr=False, compare=False)
    alpha_bar: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.T < 1 or not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError("need T >= 1 and 0 < beta_start <= beta_end < 1")
        betas = np.linspace(self.beta_start, self.beta_end, self.T)
        # alpha_bar[0] = 1 is the clean level; alpha_bar[i] = prod_{j<=i} (1 - beta_j)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    def check_step(self, i: int, allow_zero: bool = False):
        lo = 0 if allow_zero else 1
        if int(i) != i or not lo <= i <= self.T:
            raise ValueError(f"diffusion step must lie in [{lo}, {self.T}], got {i}")
        return int(i)


def diffusion_forward_sample(z_tgt, i: int, eps, d: DiffusionSchedule):
    """z_i = sqrt(abar_i) z_tgt + sqrt(1 - abar_i) eps."""
    i = d.check_step(i, allow_zero=True)
    if np.shape(z_tgt) != np.shape(eps):
        raise ValueError(f"shape mismatch: {np.shape(z_tgt)} vs {np.shape(eps)}")
    ab = d.alpha_bar[i]
    return np.sqrt(ab) * np.asarray(z_tgt) + np.sqrt(1.0 - ab) * np.asarray(eps)


def noise_batch(sources, targets, masks, steps, eps, d: DiffusionSchedule) -> Batch:
    """Training batch whose regression target is the injected noise."""
    z_t = np.stack([diffusion_forward_sample(tg, i, e, d) for tg, i, e in zip(targets, steps, eps)])
    t = np.asarray(steps, dtype=np.float64) / d.T
    return Batch(z_t=z_t.astype(eps.dtype), t=t, z_src=sources, mask=masks, target=eps)


def noise_loss(p, triplet, i: int, eps, d: DiffusionSchedule) -> float:
    """Mean squared error between the predicted and injected noise."""
    i = d.check_step(i)
    z_t = diffusion_forward_sample(triplet.target, i, eps, d)
    eps_hat = forward(p, z_t, i / d.T, triplet.source, triplet.mask)
    loss = float(np.mean((np.asarray(eps_hat, dtype=np.float64) - eps) ** 2))
    if not np.isfinite(loss):
        raise RuntimeError("non-finite noise loss")
    return loss


def ddim_timesteps(n: int, d: DiffusionSchedule) -> np.ndarray:
    if int(n) != n or not 1 <= n <= d.T:
        raise ValueError(f"need 1 <= steps <= {d.T}, got {n}")
    return np.round(np.linspace(d.T, 0, int(n) + 1)).astype(int)


def ddim_sample(
    model,
    z_src,
    cond,
    n_steps: int,
    d: DiffusionSchedule,
    seed: int = 0,
    z_init=None,
    clip: float | None = None,
):
    """Deterministic DDIM from pure noise.

    ``model(z, t, cond)`` predicts the noise, with t = step / T.  ``z_init``
    overrides the initial Gaussian draw.  ``clip`` bounds each clean-target
    estimate to [-clip, clip]; at high noise levels the estimate divides the
    network error by sqrt(abar) ~ 6e-3, so trained models need it.
    """
    ts = ddim_timesteps(n_steps, d)
    shape = np.shape(z_src)
    if z_init is None:
        z = np.random.default_rng(seed).standard_normal(shape).astype(np.asarray(z_src).dtype)
    else:
        z = np.array(z_init, copy=True)
    for k in range(len(ts) - 1):
        i, i_prev = ts[k], ts[k + 1]
        eps_hat = model(z, i / d.T, cond)
        if np.shape(eps_hat) != shape:
            raise RuntimeError(f"model output shape {np.shape(eps_hat)} != state shape {shape}")
        ab = d.alpha_bar[i]
        z0_hat = (z - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
        if clip is not None:
            z0_hat = np.clip(z0_hat, -clip, clip)
            eps_hat = (z - np.sqrt(ab) * z0_hat) / np.sqrt(1.0 - ab)
        if i_prev > 0:
            ab_prev = d.alpha_bar[i_prev]
            z = np.sqrt(ab_prev) * z0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
        else:
            z = z0_hat
        if not np.all(np.isfinite(z)):
            raise NonFiniteStateError(f"non-finite state after step {k} (diffusion step {i_prev})")
    return z
