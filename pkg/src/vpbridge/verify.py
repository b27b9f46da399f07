"""Self-contained numerical checks of the bridge, solver, network and baseline.

Each check returns a :class:`CheckResult` holding the measured error and the
tolerance it is held to.  ``run_checks`` drives the whole battery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baseline import DiffusionSchedule, ddim_sample, diffusion_forward_sample
from .bridge import (
    analytic_score,
    interpolate,
    recover_target,
    simulate_forward_bridge,
    velocity_target,
)
from .model import AMM_KEYS, Batch, init_params, loss_and_grad
from .sampler import SamplerConfig, bridge_chain, sample
from .schedule import NoiseSchedule, coefficients_at


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{status}] {self.name}: measured {self.measured:.3e} vs tol {self.tolerance:.1e}{extra}"


def _rel(x, y) -> np.ndarray:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    scale = np.maximum(np.abs(x), np.abs(y))
    diff = np.abs(x - y)
    return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)


def check_schedule_identities(s: NoiseSchedule | None = None, n: int = 1000, tol: float = 1e-12) -> CheckResult:
    """a + b = 1, c^2 = a b sigma_1^2, and rho^2 = a in normalized mode."""
    s = s or NoiseSchedule()
    worst = 0.0
    for sched in (s, NoiseSchedule(s.beta_min, s.beta_max, normalized=not s.normalized)):
        for t in np.linspace(0.0, 1.0, n):
            k = coefficients_at(sched, t)
            worst = max(worst, float(_rel(k.a + k.b, 1.0)), float(_rel(k.c**2, k.a * k.b * sched.sigma1_sq)))
            if sched.normalized:
                worst = max(worst, float(_rel(k.rho**2, k.a)))
        k0, k1 = coefficients_at(sched, 0.0), coefficients_at(sched, 1.0)
        if (k0.a, k0.b, k0.c) != (1.0, 0.0, 0.0) or (k1.a, k1.b, k1.c) != (0.0, 1.0, 0.0):
            worst = max(worst, 1.0)
    return CheckResult("schedule", worst, tol, worst <= tol, f"{n}-point grid, both modes")


def check_mc_marginal(
    s: NoiseSchedule | None = None,
    n_paths: int = 100_000,
    n_steps: int = 500,
    seed: int = 0,
    z_tgt: float = -1.0,
    z_src: float = 2.0,
) -> CheckResult:
    """Euler-Maruyama bridge paths vs the closed-form marginal at t = 0.1..0.9.

    Passes when every mean is within 4 standard errors and every std within
    10%.  ``measured`` is the worst mean deviation in standard errors.
    """
    s = s or NoiseSchedule()
    times = [round(0.1 * i, 10) for i in range(1, 10)]
    states = simulate_forward_bridge(
        np.full(n_paths, z_tgt), np.full(n_paths, z_src), n_steps, s, seed=seed, record_at=times
    )
    worst_z, worst_std = 0.0, 0.0
    for st in states:
        k = coefficients_at(s, st.t)
        mean = k.a * z_tgt + k.b * z_src
        se = k.c / np.sqrt(n_paths)
        worst_z = max(worst_z, abs(st.z.mean() - mean) / abs(se))
        worst_std = max(worst_std, abs(st.z.std(ddof=1) / k.c - 1.0))
    ok = worst_z <= 4.0 and worst_std <= 0.10
    return CheckResult("mc_marginal", worst_z, 4.0, ok, f"worst std rel err {worst_std:.3e} vs 1.0e-01")


def check_score_velocity(s: NoiseSchedule | None = None, tol: float = 1e-9, seed: int = 0) -> CheckResult:
    """Score rebuilt from the velocity target equals the analytic score."""
    s = s or NoiseSchedule()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in np.linspace(0.01, 0.99, 99):
        z_tgt, z_src, eps = rng.standard_normal((3, 64))
        k = coefficients_at(s, t)
        z_t = interpolate(z_tgt, z_src, t, eps, s)
        u = velocity_target(z_tgt, eps, t, s)
        eps_from_u = (k.rho * u + k.c * z_tgt) / k.a
        worst = max(worst, float(np.max(_rel(-eps_from_u / k.c, analytic_score(z_t, z_tgt, z_src, t, s)))))
    return CheckResult("score_velocity", worst, tol, worst <= tol, "t in [0.01, 0.99]")


def check_round_trip(s: NoiseSchedule | None = None, tol: float = 1e-9, seed: int = 0) -> CheckResult:
    s = s or NoiseSchedule()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in np.linspace(0.001, 0.999, 999):
        z_tgt, z_src, eps = rng.standard_normal((3, 32))
        z_t = interpolate(z_tgt, z_src, t, eps, s)
        v = velocity_target(z_tgt, eps, t, s)
        back = recover_target(z_t, v, z_src, t, s)
        worst = max(worst, float(np.max(np.abs(back - z_tgt)) / np.max(np.abs(z_tgt))))
    return CheckResult("round_trip", worst, tol, worst <= tol)


def exact_velocity_model(z_tgt, z_src, s: NoiseSchedule):
    """Velocity oracle that knows the true target and reads the noise off the state."""

    def model(z, t, cond):
        k = coefficients_at(s, t)
        eps = (z - k.a * z_tgt - k.b * z_src) / k.c
        return velocity_target(z_tgt, eps, t, s)

    return model


def check_solver(
    s: NoiseSchedule | None = None,
    n_runs: int = 100_000,
    steps: int = 50,
    seed: int = 0,
    tol: float = 1e-6,
) -> CheckResult:
    """Chain-marginal consistency plus exact-velocity convergence.

    With z0_hat fixed to the true target, the chain started at z_src must
    reproduce the closed-form marginal at every grid time (mean within 4 SE,
    variance within 10%).  With the exact-velocity oracle, deterministic
    sampling must return z_tgt within ``tol`` at N=50, with the error
    non-increasing over N in {1, 5, 10, 25, 50}.
    """
    s = s or NoiseSchedule()
    z_tgt_val, z_src_val = -1.0, 2.0
    z_src = np.full(n_runs, z_src_val)
    worst = {"z": 0.0, "var": 0.0}

    def on_step(k, t_next, z):
        if t_next == 0.0:
            return
        c = coefficients_at(s, t_next)
        mean = c.a * z_tgt_val + c.b * z_src_val
        worst["z"] = max(worst["z"], abs(z.mean() - mean) / (c.c / np.sqrt(n_runs)))
        worst["var"] = max(worst["var"], abs(z.var(ddof=1) / c.c**2 - 1.0))

    bridge_chain(
        z_src,
        lambda z, t: np.full_like(z, z_tgt_val),
        SamplerConfig(steps=steps, stochastic=True, seed=seed),
        s,
        on_step=on_step,
    )

    rng = np.random.default_rng(seed + 1)
    z_tgt = rng.standard_normal((2, 4, 4))
    z_src_t = rng.standard_normal((2, 4, 4))
    model = exact_velocity_model(z_tgt, z_src_t, s)
    errors = []
    for n in (1, 5, 10, 25, 50):
        out = sample(model, z_src_t, None, SamplerConfig(steps=n, stochastic=False), s)
        errors.append(float(np.linalg.norm(out - z_tgt)))
    monotone = all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    err50 = float(np.max(np.abs(out - z_tgt)))
    ok = worst["z"] <= 4.0 and worst["var"] <= 0.10 and err50 <= tol and monotone
    detail = (
        f"chain mean {worst['z']:.2f} SE (tol 4), var rel err {worst['var']:.3e} (tol 0.1), "
        f"N=50 exact-velocity error {err50:.1e} (tol {tol:.0e}), monotone={monotone}"
    )
    return CheckResult("solver", err50, tol, ok, detail)


def gradient_check(params: dict, batch: Batch, h: float = 1e-4, per_tensor: int | None = 48, seed: int = 0):
    """Central differences vs analytic gradients.

    Returns {name: relative error}, the error being the largest absolute
    discrepancy over the probed entries divided by the largest gradient
    magnitude among them.  ``per_tensor`` caps the number of probed entries
    per tensor (None probes every entry).
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_and_grad(params, batch)
    errors = {}
    for name, value in params.items():
        flat = value.reshape(-1)
        idx = np.arange(flat.size)
        if per_tensor is not None and flat.size > per_tensor:
            idx = rng.choice(flat.size, per_tensor, replace=False)
        analytic = grads[name].reshape(-1)[idx]
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = loss_and_grad(params, batch)
            flat[i] = orig - h
            lm, _ = loss_and_grad(params, batch)
            flat[i] = orig
            numeric[j] = (lp - lm) / (2 * h)
        scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
        errors[name] = float(np.max(np.abs(analytic - numeric)) / scale)
    return errors


def gradcheck_problem(seed: int = 0, frames: int = 2, size: int = 8, batch: int = 2):
    """Float64 micro-batch with AMM weights perturbed away from zero."""
    rng = np.random.default_rng(seed)
    params = init_params(frames, seed=seed, dtype=np.float64)
    for k in AMM_KEYS:
        params[k] = params[k] + rng.normal(0.0, 0.3, params[k].shape)
    shape = (batch, frames, size, size)
    b = Batch(
        z_t=rng.standard_normal(shape),
        t=rng.uniform(0.0, 1.0, batch),
        z_src=rng.standard_normal(shape),
        mask=(rng.uniform(size=shape) > 0.5).astype(np.float64),
        target=rng.standard_normal(shape),
    )
    return params, b


def check_gradients(tol: float = 1e-4, seed: int = 0, per_tensor: int | None = 48) -> CheckResult:
    params, batch = gradcheck_problem(seed)
    errors = gradient_check(params, batch, per_tensor=per_tensor, seed=seed)
    name, worst = max(errors.items(), key=lambda kv: kv[1])
    return CheckResult("gradcheck", worst, tol, worst < tol, f"{len(errors)} tensors, worst {name}")


def check_ddim_oracle(tol: float = 1e-9, seed: int = 0, d: DiffusionSchedule | None = None) -> CheckResult:
    """DDIM fed the true noise inverts the forward corruption exactly."""
    d = d or DiffusionSchedule()
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal((2, 4, 4))
    eps = rng.standard_normal((2, 4, 4))
    worst = 0.0
    for n in (1, 10, 50, 1000):
        z_init = diffusion_forward_sample(z0, d.T, eps, d)
        out = ddim_sample(lambda z, t, c: eps, z0, None, n, d, z_init=z_init)
        worst = max(worst, float(np.max(np.abs(out - z0))))
    return CheckResult("ddim_oracle", worst, tol, worst <= tol, "N in {1, 10, 50, 1000}")


CHECKS = {
    "schedule": check_schedule_identities,
    "mc_marginal": check_mc_marginal,
    "score_velocity": check_score_velocity,
    "round_trip": check_round_trip,
    "solver": check_solver,
    "gradcheck": check_gradients,
    "ddim_oracle": check_ddim_oracle,
}

_SCHEDULE_CHECKS = {"schedule", "mc_marginal", "score_velocity", "round_trip", "solver"}


def run_checks(s: NoiseSchedule | None = None, only=None) -> list[CheckResult]:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; choose from {sorted(CHECKS)}")
    results = []
    for name in names:
        fn = CHECKS[name]
        results.append(fn(s) if name in _SCHEDULE_CHECKS else fn())
    return results
