import numpy as np
import pytest

from vpbridge.baseline import (
    DiffusionSchedule,
    ddim_sample,
    ddim_timesteps,
    diffusion_forward_sample,
    noise_loss,
)
from vpbridge.data import RemovalTriplet
from vpbridge.model import init_params
from vpbridge.sampler import NonFiniteStateError

D = DiffusionSchedule()


def test_schedule_shape():
    assert D.alpha_bar.shape == (1001,)
    assert D.alpha_bar[0] == 1.0
    assert np.all(np.diff(D.alpha_bar) < 0)
    # product of (1 - beta) in closed form for the first step
    assert D.alpha_bar[1] == pytest.approx(1 - 1e-4, rel=1e-15)


def test_forward_sample_examples():
    z, eps = np.array([2.0]), np.array([1.0])
    np.testing.assert_array_equal(diffusion_forward_sample(z, 0, eps, D), z)
    # near-zero abar: output is essentially eps
    assert diffusion_forward_sample(z, D.T, eps, D)[0] == pytest.approx(1.0, abs=0.02)


def test_forward_sample_quarter():
    # find the arithmetic in a custom schedule where abar_1 = 0.25
    d = DiffusionSchedule(T=1, beta_start=0.75, beta_end=0.75)
    assert d.alpha_bar[1] == pytest.approx(0.25)
    out = diffusion_forward_sample(np.array([2.0]), 1, np.array([1.0]), d)
    assert out[0] == pytest.approx(1.8660254037844386, rel=1e-12)


def test_forward_sample_errors():
    with pytest.raises(ValueError):
        diffusion_forward_sample(np.zeros(2), 1001, np.zeros(2), D)
    with pytest.raises(ValueError):
        diffusion_forward_sample(np.zeros(2), 5, np.zeros(3), D)


def _triplet(frames=2, size=6, seed=0):
    rng = np.random.default_rng(seed)
    shape = (frames, size, size)
    return RemovalTriplet(
        source=rng.standard_normal(shape).astype(np.float32),
        target=rng.standard_normal(shape).astype(np.float32),
        mask=(rng.uniform(size=shape) > 0.5).astype(np.float32),
    )


def test_noise_loss_zero_model_unit_eps():
    p = {k: np.zeros_like(v) for k, v in init_params(2).items()}
    tr = _triplet()
    assert noise_loss(p, tr, 500, np.ones(tr.source.shape, np.float32), D) == pytest.approx(1.0)


def test_noise_loss_rejects_step_zero():
    tr = _triplet()
    with pytest.raises(ValueError):
        noise_loss(init_params(2), tr, 0, np.zeros(tr.source.shape), D)


def test_timesteps():
    np.testing.assert_array_equal(ddim_timesteps(1, D), [1000, 0])
    np.testing.assert_array_equal(ddim_timesteps(4, D), [1000, 750, 500, 250, 0])
    assert len(ddim_timesteps(1000, D)) == 1001
    with pytest.raises(ValueError):
        ddim_timesteps(0, D)


@pytest.mark.parametrize("n", [1, 7, 50, 1000])
def test_oracle_inversion(n):
    rng = np.random.default_rng(n)
    z0, eps = rng.standard_normal((2, 3, 5, 5))
    z_init = diffusion_forward_sample(z0, D.T, eps, D)
    out = ddim_sample(lambda z, t, c: eps, z0, None, n, D, z_init=z_init)
    np.testing.assert_allclose(out, z0, rtol=0, atol=1e-9)


def test_one_step_is_one_shot_estimate():
    rng = np.random.default_rng(1)
    z_init, eps_hat = rng.standard_normal((2, 4))
    out = ddim_sample(lambda z, t, c: eps_hat, np.zeros(4), None, 1, D, z_init=z_init)
    ab = D.alpha_bar[D.T]
    np.testing.assert_allclose(out, (z_init - np.sqrt(1 - ab) * eps_hat) / np.sqrt(ab), rtol=1e-12)


def test_model_time_input():
    seen = []
    ddim_sample(lambda z, t, c: seen.append(t) or np.zeros_like(z), np.zeros(2), None, 4, D)
    assert seen == [1.0, 0.75, 0.5, 0.25]


def test_clip_bounds_output():
    out = ddim_sample(lambda z, t, c: np.full_like(z, -3.0), np.zeros(8), None, 10, D, clip=1.0)
    assert np.all(np.abs(out) <= 1.0)


def test_clip_leaves_oracle_alone_when_in_range():
    rng = np.random.default_rng(3)
    z0 = rng.uniform(-0.9, 0.9, 10)
    eps = rng.standard_normal(10)
    z_init = diffusion_forward_sample(z0, D.T, eps, D)
    out = ddim_sample(lambda z, t, c: eps, z0, None, 25, D, z_init=z_init, clip=1.0)
    np.testing.assert_allclose(out, z0, atol=1e-9)


def test_seeded_initial_noise_is_deterministic():
    f = lambda z, t, c: 0.1 * z  # noqa: E731
    a = ddim_sample(f, np.zeros(6), None, 5, D, seed=4)
    b = ddim_sample(f, np.zeros(6), None, 5, D, seed=4)
    assert a.tobytes() == b.tobytes()


def test_non_finite_reports_step():
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteStateError, match="step 0"):
        ddim_sample(lambda z, t, c: np.full_like(z, np.inf), np.zeros(2), None, 3, D)
