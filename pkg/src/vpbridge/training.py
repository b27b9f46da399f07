"""Velocity-matching training loop with AdamW.

Each sample in a batch draws its dataset index, time and noise from a
generator keyed by (seed, step, sample index), so a batch does not depend on
how its samples are ordered or computed.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .baseline import DiffusionSchedule, noise_batch
from .bridge import interpolate, velocity_target
from .data import stack
from .model import Batch, forward, init_params, loss_and_grad
from .schedule import NoiseSchedule

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


class LossKind(enum.Enum):
    BRIDGE_VELOCITY = "bridge"
    DIFFUSION_NOISE = "diffusion"


class DivergenceError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_size: int = 8
    total_steps: int = 2000
    t_clamp_hi: float = 1.0 - 1e-4
    seed: int = 0
    loss_kind: LossKind = LossKind.BRIDGE_VELOCITY
    amm: bool = True
    log_every: int = 100

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("batch_size must be >= 1 and total_steps >= 0")
        if not 0 < self.t_clamp_hi < 1:
            raise ValueError("t_clamp_hi must lie in (0, 1)")


@dataclass
class OptimState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "OptimState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def adamw_step(params: dict, grads: dict, state: OptimState, cfg: TrainConfig):
    """One AdamW update with bias correction and decoupled weight decay.

    Moment constants are taken from ``cfg`` without range checks so that the
    degenerate beta1 = beta2 = 0 case can be exercised directly.
    """
    step = state.step + 1
    bc1 = 1.0 - cfg.beta1**step
    bc2 = 1.0 - cfg.beta2**step
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps_adam) + cfg.weight_decay * p
        new_params[k] = (p - cfg.lr * update).astype(p.dtype, copy=False)
        m_new[k], v_new[k] = m, v
    return new_params, OptimState(m=m_new, v=v_new, step=step)


def bridge_batch(sources, targets, masks, times, eps, s: NoiseSchedule) -> Batch:
    """Training batch: bridge states and their velocity targets."""
    z_t = np.stack([interpolate(tg, sr, t, e, s) for tg, sr, t, e in zip(targets, sources, times, eps)])
    u_t = np.stack([velocity_target(tg, e, t, s) for tg, t, e in zip(targets, times, eps)])
    dtype = eps.dtype
    return Batch(
        z_t=z_t.astype(dtype),
        t=np.asarray(times, dtype=np.float64),
        z_src=sources,
        mask=masks,
        target=u_t.astype(dtype),
    )


def bridge_loss(params: dict, triplet, t: float, eps, s: NoiseSchedule) -> float:
    """Mean squared velocity error for one triplet at time t."""
    z_t = interpolate(triplet.target, triplet.source, t, eps, s)
    u_t = velocity_target(triplet.target, eps, t, s)
    v = forward(params, z_t, t, triplet.source, triplet.mask)
    loss = float(np.mean((np.asarray(v, dtype=np.float64) - u_t) ** 2))
    if not np.isfinite(loss):
        raise RuntimeError("non-finite bridge loss")
    return loss


def draw_batch(arrays, step: int, cfg: TrainConfig, s: NoiseSchedule, d: DiffusionSchedule):
    """Assemble the batch for ``step`` from stacked (source, target, mask)."""
    sources, targets, masks = arrays
    n = len(sources)
    idx, times, steps, eps = [], [], [], []
    for j in range(cfg.batch_size):
        rng = np.random.default_rng([cfg.seed, step, j])
        idx.append(int(rng.integers(n)))
        times.append(float(rng.uniform(0.0, cfg.t_clamp_hi)))
        steps.append(int(rng.integers(1, d.T + 1)))
        eps.append(rng.standard_normal(sources.shape[1:]))
    eps = np.stack(eps).astype(sources.dtype)
    src, tgt, msk = sources[idx], targets[idx], masks[idx]
    if cfg.loss_kind is LossKind.BRIDGE_VELOCITY:
        return bridge_batch(src, tgt, msk, times, eps, s)
    return noise_batch(src, tgt, msk, steps, eps, d)


def train(
    dataset,
    cfg: TrainConfig,
    s: NoiseSchedule,
    d: DiffusionSchedule | None = None,
    params: dict | None = None,
    dtype=np.float32,
):
    """Fixed-budget training.  Returns (params, curve) with one
    (step, loss) pair per step."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    d = d or DiffusionSchedule()
    arrays = tuple(a.astype(dtype) for a in stack(dataset))
    if params is None:
        params = init_params(arrays[0].shape[1], amm=cfg.amm, seed=cfg.seed, dtype=dtype)
    state = OptimState.zeros_like(params)
    curve = []
    for step in range(cfg.total_steps):
        batch = draw_batch(arrays, step, cfg, s, d)
        try:
            loss, grads = loss_and_grad(params, batch)
        except RuntimeError:
            raise DivergenceError(step, float("nan")) from None
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise DivergenceError(step, loss)
        params, state = adamw_step(params, grads, state, cfg)
        curve.append((step, loss))
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("step %d loss %.6f", step, loss)
    return params, curve
