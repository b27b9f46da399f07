"""Toy velocity network with Adaptive Mask Modulation (AMM).

Frames are folded into channels.  Input is the stack (z_t, z_src, mask) with
3F channels; the pipeline is

    conv1 -> + time bias -> AMM -> tanh -> conv2 -> tanh -> conv_out

AMM embeds the mask with a 3x3 conv, maps the embedding through two 1x1
projections to a per-pixel scale gamma and shift beta, and applies
h' = h * (1 + gamma) + beta.  The projections start at zero, so AMM is the
identity at initialization.

Parameters live in a plain ``dict[str, ndarray]`` with a fixed key order.
Gradients are derived by hand per layer and returned in a dict of the same
shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ModelParams = dict  # name -> ndarray
Gradients = dict

HIDDEN = 32
MASK_DIM = 8
TIME_DIM = 16

AMM_KEYS = (
    "amm_embed.w",
    "amm_embed.b",
    "amm_gamma.w",
    "amm_gamma.b",
    "amm_beta.w",
    "amm_beta.b",
)


def time_embedding(t, dim: int = TIME_DIM) -> np.ndarray:
    """Sinusoidal features [sin(w_k t), cos(w_k t)], w_k geometric in [1, 1e4].

    Scalar t gives shape (dim,); a vector of B times gives (B, dim).
    """
    if dim <= 0 or dim % 2:
        raise ValueError(f"embedding dim must be a positive even number, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    freqs = np.geomspace(1.0, 1e4, dim // 2)
    angles = t_arr[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


def init_params(
    frames: int,
    *,
    amm: bool = True,
    seed: int = 0,
    dtype=np.float32,
    hidden: int = HIDDEN,
    mask_dim: int = MASK_DIM,
    time_dim: int = TIME_DIM,
) -> ModelParams:
    rng = np.random.default_rng(seed)

    def conv(out_ch, in_ch, k=3):
        scale = np.sqrt(1.0 / (in_ch * k * k))
        return rng.normal(0.0, scale, size=(out_ch, in_ch, k, k))

    p = {
        "conv1.w": conv(hidden, 3 * frames),
        "conv1.b": np.zeros(hidden),
        "time.w": rng.normal(0.0, np.sqrt(1.0 / time_dim), size=(hidden, time_dim)),
        "time.b": np.zeros(hidden),
    }
    if amm:
        p["amm_embed.w"] = conv(mask_dim, frames)
        p["amm_embed.b"] = np.zeros(mask_dim)
        p["amm_gamma.w"] = np.zeros((hidden, mask_dim))
        p["amm_gamma.b"] = np.zeros(hidden)
        p["amm_beta.w"] = np.zeros((hidden, mask_dim))
        p["amm_beta.b"] = np.zeros(hidden)
    p["conv2.w"] = conv(hidden, hidden)
    p["conv2.b"] = np.zeros(hidden)
    p["conv_out.w"] = conv(frames, hidden)
    p["conv_out.b"] = np.zeros(frames)
    return {k: v.astype(dtype) for k, v in p.items()}


def has_amm(p: ModelParams) -> bool:
    return "amm_embed.w" in p


def frames_of(p: ModelParams) -> int:
    return p["conv_out.w"].shape[0]


def n_parameters(p: ModelParams) -> int:
    return sum(v.size for v in p.values())


# -- convolution primitives (stride 1, same padding) ------------------------


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(xp, (k, k), axis=(2, 3))  # (B, C, H, W, k, k)


def _conv(win: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (B, H, W, O)
    return y.transpose(0, 3, 1, 2) + b[None, :, None, None]


def _conv_grad_w(win: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))


def _conv_grad_x(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    win = _windows(dy, w.shape[-1])
    flipped = w[:, :, ::-1, ::-1]
    dx = np.tensordot(win, flipped, axes=([1, 4, 5], [0, 2, 3]))  # (B, H, W, C)
    return dx.transpose(0, 3, 1, 2)


# -- forward / backward ------------------------------------------------------


@dataclass
class Batch:
    """One training micro-batch; every array is (B, F, H, W), t is (B,)."""

    z_t: np.ndarray
    t: np.ndarray
    z_src: np.ndarray
    mask: np.ndarray
    target: np.ndarray


def _as_batched(x):
    x = np.asarray(x)
    return x[None] if x.ndim == 3 else x


def forward(p: ModelParams, z_t, t, z_src, mask, *, return_cache: bool = False):
    """Velocity prediction with the shape of ``z_t``.

    Accepts a single (F, H, W) sample or a (B, F, H, W) batch; ``t`` is a
    scalar or a length-B vector.
    """
    single = np.ndim(z_t) == 3
    z_t, z_src, mask = _as_batched(z_t), _as_batched(z_src), _as_batched(mask)
    if not (z_t.shape == z_src.shape == mask.shape):
        raise ValueError(f"shape mismatch: {z_t.shape}, {z_src.shape}, {mask.shape}")
    frames = frames_of(p)
    if z_t.shape[1] != frames:
        raise ValueError(f"model expects {frames} frames, got input of shape {z_t.shape[1:]}")
    for name, v in p.items():
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite parameter {name}")

    dtype = p["conv1.w"].dtype
    B = z_t.shape[0]
    t_vec = np.broadcast_to(np.asarray(t, dtype=np.float64), (B,))
    temb = time_embedding(t_vec, p["time.w"].shape[1]).astype(dtype)

    x = np.concatenate([z_t, z_src, mask], axis=1).astype(dtype, copy=False)
    win_x = _windows(x, 3)
    tb = temb @ p["time.w"].T + p["time.b"]
    h = _conv(win_x, p["conv1.w"], p["conv1.b"]) + tb[:, :, None, None]

    cache = {"win_x": win_x, "temb": temb, "h": h}
    if has_amm(p):
        win_m, e, gamma, beta = _mask_modulation(p, mask.astype(dtype, copy=False))
        hm = amm_apply(h, gamma, beta)
        cache.update(win_m=win_m, e=e, gamma=gamma)
    else:
        hm = h

    a1 = np.tanh(hm)
    win_a1 = _windows(a1, 3)
    a2 = np.tanh(_conv(win_a1, p["conv2.w"], p["conv2.b"]))
    win_a2 = _windows(a2, 3)
    out = _conv(win_a2, p["conv_out.w"], p["conv_out.b"])
    cache.update(a1=a1, win_a1=win_a1, a2=a2, win_a2=win_a2)

    if single:
        out = out[0]
    return (out, cache) if return_cache else out


def amm_apply(h, gamma, beta):
    """h' = h * (1 + gamma) + beta."""
    if not (np.shape(h) == np.shape(gamma) == np.shape(beta)):
        raise ValueError(f"shape mismatch: {np.shape(h)}, {np.shape(gamma)}, {np.shape(beta)}")
    return h * (1.0 + gamma) + beta


def amm_modulate(h, mask, p: ModelParams):
    """Modulate first-layer features h (B, D, H, W) with the mask (B, F, H, W)."""
    h, mask = _as_batched(h), _as_batched(mask)
    if h.shape[0] != mask.shape[0] or h.shape[2:] != mask.shape[2:]:
        raise ValueError(f"shape mismatch: {h.shape} vs {mask.shape}")
    _, _, gamma, beta = _mask_modulation(p, mask)
    return amm_apply(h, gamma, beta)


def _mask_modulation(p: ModelParams, mask):
    """Mask embedding and the per-pixel (gamma, beta) it produces."""
    win_m = _windows(mask, 3)
    e = _conv(win_m, p["amm_embed.w"], p["amm_embed.b"])
    gamma = np.einsum("oc,bchw->bohw", p["amm_gamma.w"], e) + p["amm_gamma.b"][None, :, None, None]
    beta = np.einsum("oc,bchw->bohw", p["amm_beta.w"], e) + p["amm_beta.b"][None, :, None, None]
    return win_m, e, gamma, beta


def backward(p: ModelParams, cache: dict, dout: np.ndarray) -> Gradients:
    """Gradients of sum(dout * forward(...)) with respect to every parameter."""
    g = {}
    dout = _as_batched(dout)
    g["conv_out.w"] = _conv_grad_w(cache["win_a2"], dout)
    g["conv_out.b"] = dout.sum(axis=(0, 2, 3))
    a2 = cache["a2"]
    dp2 = _conv_grad_x(dout, p["conv_out.w"]) * (1.0 - a2 * a2)
    g["conv2.w"] = _conv_grad_w(cache["win_a1"], dp2)
    g["conv2.b"] = dp2.sum(axis=(0, 2, 3))
    a1 = cache["a1"]
    dhm = _conv_grad_x(dp2, p["conv2.w"]) * (1.0 - a1 * a1)

    if has_amm(p):
        h, e, gamma = cache["h"], cache["e"], cache["gamma"]
        dh = dhm * (1.0 + gamma)
        dgamma = dhm * h
        dbeta = dhm
        g["amm_gamma.w"] = np.einsum("bohw,bchw->oc", dgamma, e)
        g["amm_gamma.b"] = dgamma.sum(axis=(0, 2, 3))
        g["amm_beta.w"] = np.einsum("bohw,bchw->oc", dbeta, e)
        g["amm_beta.b"] = dbeta.sum(axis=(0, 2, 3))
        de = np.einsum("bohw,oc->bchw", dgamma, p["amm_gamma.w"]) + np.einsum(
            "bohw,oc->bchw", dbeta, p["amm_beta.w"]
        )
        g["amm_embed.w"] = _conv_grad_w(cache["win_m"], de)
        g["amm_embed.b"] = de.sum(axis=(0, 2, 3))
    else:
        dh = dhm

    g["conv1.w"] = _conv_grad_w(cache["win_x"], dh)
    g["conv1.b"] = dh.sum(axis=(0, 2, 3))
    dtb = dh.sum(axis=(2, 3))
    g["time.w"] = dtb.T @ cache["temb"]
    g["time.b"] = dtb.sum(axis=0)
    return {k: g[k].astype(p[k].dtype, copy=False) for k in p}


def loss_and_grad(p: ModelParams, batch: Batch, scale: float = 1.0):
    """Mean squared error between the network output and ``batch.target``."""
    out, cache = forward(p, batch.z_t, batch.t, batch.z_src, batch.mask, return_cache=True)
    target = _as_batched(batch.target)
    resid = out - target
    per_sample = np.mean(resid.astype(np.float64).reshape(len(resid), -1) ** 2, axis=1)
    # fsum is exactly rounded, so the loss does not depend on batch order
    loss = scale * math.fsum(per_sample.tolist()) / len(per_sample)
    if not np.isfinite(loss):
        raise RuntimeError("non-finite loss")
    dout = (2.0 * scale / resid.size) * resid
    return loss, backward(p, cache, dout)


class VelocityModel:
    """Adapter exposing ``model(z, t, cond)`` for the samplers.

    ``cond`` is the stacked condition from :func:`make_condition`.
    """

    def __init__(self, params: ModelParams):
        self.params = params

    def __call__(self, z, t, cond):
        mask, z_src = split_condition(cond)
        out = forward(self.params, z, t, z_src, mask)
        return out.astype(np.asarray(z).dtype, copy=False)


def make_condition(mask, z_src) -> np.ndarray:
    """y = Concat(mask, z_src) along the frame axis."""
    mask, z_src = np.asarray(mask), np.asarray(z_src)
    if mask.shape != z_src.shape:
        raise ValueError(f"shape mismatch: {mask.shape} vs {z_src.shape}")
    return np.concatenate([mask, z_src], axis=-3)


def split_condition(cond):
    cond = np.asarray(cond)
    f = cond.shape[-3] // 2
    return cond[..., :f, :, :], cond[..., f:, :, :]
