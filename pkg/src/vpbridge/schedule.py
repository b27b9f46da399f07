"""Variance clock of the bridge process.

The bridge is driftless: dz = g(t)^2 h dt + g(t) dw with g(t)^2 = beta(t), so
its cumulative variance is sigma_t^2 = int_0^t beta(u) du.  For a linear beta
this integral is available in closed form.

Convention: t=0 is the clean target, t=1 is the source prior.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ScheduleKind(enum.Enum):
    LINEAR = "linear"


def _check_time(t, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < lo) or np.any(arr > hi):
        raise ValueError(f"time must lie in [{lo}, {hi}], got {t!r}")
    return arr


def _maybe_scalar(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta(t) schedule and the variance clock it induces.

    In normalized mode every variance is divided by the raw terminal variance
    so that sigma_1^2 = 1.
    """

    beta_min: float = 0.01
    beta_max: float = 50.0
    kind: ScheduleKind = ScheduleKind.LINEAR
    normalized: bool = True

    def __post_init__(self):
        if not (self.beta_min >= 0.0 and self.beta_max > self.beta_min):
            raise ValueError(
                f"need 0 <= beta_min < beta_max, got {self.beta_min}, {self.beta_max}"
            )
        if self.beta_min == 0.0 and self.beta_max <= 0.0:
            raise ValueError("beta(t) must be positive")
        if self.kind is not ScheduleKind.LINEAR:
            raise ValueError(f"unsupported schedule kind {self.kind}")

    @property
    def raw_sigma1_sq(self) -> float:
        return self.beta_min + 0.5 * (self.beta_max - self.beta_min)

    @property
    def sigma1_sq(self) -> float:
        """Terminal variance in the units this schedule reports."""
        return 1.0 if self.normalized else self.raw_sigma1_sq

    def beta(self, t):
        t = _check_time(t)
        return _maybe_scalar(self.beta_min + t * (self.beta_max - self.beta_min))

    def g_sq(self, t):
        """Diffusion rate d(sigma_t^2)/dt in reported units."""
        b = np.asarray(self.beta(t))
        if self.normalized:
            b = b / self.raw_sigma1_sq
        return _maybe_scalar(b)

    def sigma_sq(self, t):
        t = _check_time(t)
        raw = self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
        if self.normalized:
            raw = raw / self.raw_sigma1_sq
        return _maybe_scalar(raw)

    def sigma_bar_sq(self, t):
        """Remaining variance sigma_1^2 - sigma_t^2."""
        return _maybe_scalar(self.sigma1_sq - np.asarray(self.sigma_sq(t)))

    def coefficients(self, t) -> "BridgeCoefficients":
        return coefficients_at(self, t)


@dataclass(frozen=True)
class BridgeCoefficients:
    """Weights of z_t = a z_tgt + b z_src + c eps, and rho = sqrt(a^2 + c^2)."""

    t: float
    a: float
    b: float
    c: float
    rho: float


@dataclass(frozen=True)
class TimeGrid:
    steps: int
    times: np.ndarray
    t_max: float

    def __post_init__(self):
        if self.steps < 1 or len(self.times) != self.steps + 1:
            raise ValueError("grid must hold steps + 1 times")
        if not np.all(np.diff(self.times) < 0) or self.times[-1] != 0.0:
            raise ValueError("grid must strictly decrease to 0")

    def pairs(self):
        """(t, t_next) for each solver step, first to last."""
        return list(zip(self.times[:-1].tolist(), self.times[1:].tolist()))


def beta_at(s: NoiseSchedule, t):
    return s.beta(t)


def sigma_sq_at(s: NoiseSchedule, t):
    return s.sigma_sq(t)


def coefficients_at(s: NoiseSchedule, t) -> BridgeCoefficients:
    """Bridge coefficients at a scalar time t.

    a = sigma_bar^2 / sigma_1^2, b = sigma^2 / sigma_1^2,
    c = sigma_bar * sigma / sigma_1, rho = sqrt(a^2 + c^2).
    """
    t = float(_check_time(t))
    s1 = s.sigma1_sq
    var = s.sigma_sq(t)
    var_bar = s1 - var
    a = var_bar / s1
    b = var / s1
    c = np.sqrt(var_bar * var / s1)
    rho = np.sqrt(a * a + c * c)
    return BridgeCoefficients(t=t, a=float(a), b=float(b), c=float(c), rho=float(rho))


def general_coefficients_at(alpha_t, sigma_t, alpha_T, sigma_T):
    """General Gaussian bridge coefficients (A, B, C) for a diffusion with
    marginals N(alpha_t z_0, sigma_t^2) pinned at time T.

    A = alpha_t (1 - r), B = r alpha_t / alpha_T, C = sigma_t sqrt(1 - r),
    with r = SNR_T / SNR_t.  B is evaluated as alpha_T sigma_t^2 /
    (alpha_t sigma_T^2) so the SNR_T -> 0 limit is finite.
    """
    alpha_t = np.asarray(alpha_t, dtype=np.float64)
    sigma_t = np.asarray(sigma_t, dtype=np.float64)
    alpha_T = np.asarray(alpha_T, dtype=np.float64)
    sigma_T = np.asarray(sigma_T, dtype=np.float64)
    if np.any(alpha_t <= 0) or np.any(sigma_T <= 0) or np.any(sigma_t < 0) or np.any(alpha_T < 0):
        raise ValueError("need alpha_t > 0, sigma_T > 0, sigma_t >= 0, alpha_T >= 0")
    ratio = (alpha_T * sigma_t) ** 2 / ((sigma_T * alpha_t) ** 2)
    if np.any(ratio > 1.0 + 1e-12):
        raise ValueError("SNR_T exceeds SNR_t: bridge would run backward in SNR")
    ratio = np.minimum(ratio, 1.0)
    A = alpha_t * (1.0 - ratio)
    B = alpha_T * sigma_t**2 / (alpha_t * sigma_T**2)
    C = sigma_t * np.sqrt(1.0 - ratio)
    return _maybe_scalar(A), _maybe_scalar(B), _maybe_scalar(C)


def make_time_grid(steps: int, t_max: float = 1.0) -> TimeGrid:
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps!r}")
    if not 0.0 < t_max <= 1.0:
        raise ValueError(f"t_max must lie in (0, 1], got {t_max}")
    times = np.linspace(t_max, 0.0, int(steps) + 1)
    times[-1] = 0.0
    return TimeGrid(steps=int(steps), times=times, t_max=float(t_max))
