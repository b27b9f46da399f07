from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from vpbridge.baseline import DiffusionSchedule
from vpbridge.data import GenSpec, generate_dataset, stack
from vpbridge.model import AMM_KEYS, init_params, loss_and_grad
from vpbridge.schedule import NoiseSchedule, coefficients_at
from vpbridge.training import (
    DivergenceError,
    LossKind,
    OptimState,
    TrainConfig,
    adamw_step,
    bridge_loss,
    draw_batch,
    train,
)

S = NoiseSchedule()
D = DiffusionSchedule()
SMALL = GenSpec(frames=2, height=8, width=8, radius_range=(1.0, 2.0))


def test_adamw_zero_grad_no_decay_is_identity():
    p = {"w": np.array([1.5, -2.0])}
    new, state = adamw_step(p, {"w": np.zeros(2)}, OptimState.zeros_like(p), TrainConfig())
    np.testing.assert_array_equal(new["w"], p["w"])
    assert state.step == 1


@pytest.mark.parametrize("wd", [0.0, 0.1])
def test_adamw_degenerate_moments(wd):
    cfg = SimpleNamespace(lr=0.01, beta1=0.0, beta2=0.0, eps_adam=1e-8, weight_decay=wd)
    p = {"w": np.array([2.0])}
    new, _ = adamw_step(p, {"w": np.array([1.0])}, OptimState.zeros_like(p), cfg)
    expected = 2.0 - 0.01 / (1 + 1e-8) - 0.01 * wd * 2.0
    assert new["w"][0] == pytest.approx(expected, rel=1e-15)


def test_adamw_decoupled_decay():
    cfg = TrainConfig(lr=0.01, weight_decay=0.5)
    p = {"w": np.array([4.0, -1.0])}
    state = OptimState.zeros_like(p)
    for _ in range(3):
        p, state = adamw_step(p, {"w": np.zeros(2)}, state, cfg)
    np.testing.assert_allclose(p["w"], np.array([4.0, -1.0]) * (1 - 0.005) ** 3, rtol=1e-14)


def test_adamw_preserves_dtype():
    p = init_params(2)
    g = {k: np.ones_like(v) for k, v in p.items()}
    new, _ = adamw_step(p, g, OptimState.zeros_like(p), TrainConfig())
    assert all(new[k].dtype == np.float32 for k in p)


def test_bridge_loss_examples():
    tr = generate_dataset(SMALL, 1)[0]
    tr = replace(tr, target=np.zeros_like(tr.target))
    eps = np.random.default_rng(0).standard_normal(tr.source.shape)
    zero = {k: np.zeros_like(v) for k, v in init_params(2, dtype=np.float64).items()}
    k = coefficients_at(S, 0.3)
    assert bridge_loss(zero, tr, 0.3, eps, S) == pytest.approx(np.mean((k.a / k.rho * eps) ** 2), rel=1e-12)


def test_draw_batch_routes_by_loss_kind():
    arrays = tuple(a.astype(np.float32) for a in stack(generate_dataset(SMALL, 4)))
    cfg = TrainConfig(batch_size=3, seed=5)
    b_bridge = draw_batch(arrays, 7, cfg, S, D)
    b_noise = draw_batch(arrays, 7, replace(cfg, loss_kind=LossKind.DIFFUSION_NOISE), S, D)
    # identical draws, different regression targets
    np.testing.assert_array_equal(b_bridge.z_src, b_noise.z_src)
    assert np.all((b_noise.t > 0) & (b_noise.t <= 1))
    assert np.all(b_noise.t * D.T == np.round(b_noise.t * D.T))
    assert not np.allclose(b_bridge.target, b_noise.target)
    # the noise batch regresses exactly the injected eps
    rng = np.random.default_rng([5, 7, 0])
    rng.integers(4), rng.uniform(0, 1), rng.integers(1, D.T + 1)
    np.testing.assert_array_equal(b_noise.target[0], rng.standard_normal((2, 8, 8)).astype(np.float32))


def test_batch_does_not_depend_on_size():
    arrays = tuple(a.astype(np.float32) for a in stack(generate_dataset(SMALL, 4)))
    small = draw_batch(arrays, 3, TrainConfig(batch_size=2), S, D)
    big = draw_batch(arrays, 3, TrainConfig(batch_size=5), S, D)
    np.testing.assert_array_equal(small.z_t, big.z_t[:2])


def test_identity_task_loss_decreases():
    data = generate_dataset(replace(SMALL, blob_amp=0.0), 16)
    _, curve = train(data, TrainConfig(total_steps=150, batch_size=4), S)
    losses = np.array([l for _, l in curve])
    assert losses[-30:].mean() < 0.7 * losses[:30].mean()


@pytest.mark.parametrize("kind", list(LossKind))
def test_training_deterministic(kind):
    data = generate_dataset(SMALL, 8)
    cfg = TrainConfig(total_steps=10, batch_size=2, loss_kind=kind)
    p1, c1 = train(data, cfg, S)
    p2, c2 = train(data, cfg, S)
    assert c1 == c2
    assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)


def test_small_step_decreases_loss():
    data = generate_dataset(SMALL, 8)
    cfg = TrainConfig(lr=1e-5, batch_size=4)
    arrays = tuple(a.astype(np.float64) for a in stack(data))
    params = init_params(2, dtype=np.float64)
    batch = draw_batch(arrays, 0, cfg, S, D)
    before, grads = loss_and_grad(params, batch)
    new, _ = adamw_step(params, grads, OptimState.zeros_like(params), cfg)
    assert loss_and_grad(new, batch)[0] < before


def test_amm_flag_controls_parameters():
    data = generate_dataset(SMALL, 4)
    p, _ = train(data, TrainConfig(total_steps=2, amm=False), S)
    assert not any(k in p for k in AMM_KEYS)


def test_divergence_aborts_with_step():
    data = generate_dataset(SMALL, 4)
    params = init_params(2)
    params["conv_out.b"] = np.full_like(params["conv_out.b"], 1e4)
    with pytest.raises(DivergenceError) as info:
        train(data, TrainConfig(total_steps=5), S, params=params)
    assert info.value.step == 0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(t_clamp_hi=1.0)
    with pytest.raises(ValueError):
        train([], TrainConfig(), S)
