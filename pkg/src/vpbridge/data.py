"""Synthetic removal triplets, dataset directories and evaluation metrics.

A triplet is a short clip of a drifting sinusoidal background (the target)
with a moving Gaussian blob composited on top (the source), plus the binary
mask of the blob.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .tensorio import read_tensor, write_tensor

MASK_THRESHOLD = 0.1
PSNR_PEAK = 2.0
_MASK_RADIUS_FACTOR = math.sqrt(2.0 * math.log(1.0 / MASK_THRESHOLD))


@dataclass(frozen=True)
class RemovalTriplet:
    source: np.ndarray
    target: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if not (self.source.shape == self.target.shape == self.mask.shape):
            raise ValueError(
                f"shape mismatch: {self.source.shape}, {self.target.shape}, {self.mask.shape}"
            )


@dataclass(frozen=True)
class GenSpec:
    """Generator settings.

    ``radius_range`` bounds the Gaussian width r of the blob; the mask edge
    sits at r * sqrt(2 ln 10) ~ 2.15 r.  With ``large=True`` the radius is
    drawn so that the mask edge is at least half the frame size and every
    frame is at least half covered.
    """

    frames: int = 4
    height: int = 16
    width: int = 16
    n_waves: int = 3
    blob_amp: float = 1.5
    radius_range: tuple = (1.5, 4.0)
    drift: float = 0.5
    large: bool = False
    seed: int = 0

    def validate(self):
        if min(self.frames, self.height, self.width) < 1 or self.n_waves < 1:
            raise ValueError("frames, height, width and n_waves must be >= 1")
        lo, hi = self.radius_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"invalid radius range {self.radius_range}")
        if not self.large and hi >= min(self.height, self.width) / 2:
            raise ValueError("blob radius must stay below half the frame size")
        if self.blob_amp < 0:
            raise ValueError("blob_amp must be non-negative")


def _background(spec: GenSpec, rng) -> np.ndarray:
    F, H, W = spec.frames, spec.height, spec.width
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    heading = rng.uniform(0, 2 * np.pi)
    dx, dy = spec.drift * np.cos(heading), spec.drift * np.sin(heading)
    bg = np.zeros((F, H, W))
    for _ in range(spec.n_waves):
        theta = rng.uniform(0, 2 * np.pi)
        k = rng.uniform(0.15, 0.6)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        for f in range(F):
            u = np.cos(theta) * (xx - dx * f) + np.sin(theta) * (yy - dy * f)
            bg[f] += amp * np.cos(k * u + phase)
    lo, hi = bg.min(), bg.max()
    return 2.0 * (bg - lo) / max(hi - lo, 1e-12) - 1.0


def _blob_weights(spec: GenSpec, rng) -> np.ndarray:
    F, H, W = spec.frames, spec.height, spec.width
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    if spec.large:
        size = min(H, W)
        r_lo = 0.5 * size / _MASK_RADIUS_FACTOR
        r_hi = 0.7 * size / _MASK_RADIUS_FACTOR
        margin = 0.25
    else:
        r_lo, r_hi = spec.radius_range
        margin = 0.1
    for _ in range(1000):
        r = rng.uniform(r_lo, r_hi)
        start = np.array([rng.uniform(margin * W, (1 - margin) * W), rng.uniform(margin * H, (1 - margin) * H)])
        speed = rng.uniform(0.5, 1.5)
        heading = rng.uniform(0, 2 * np.pi)
        vel = speed * np.array([np.cos(heading), np.sin(heading)])
        w = np.empty((F, H, W))
        for f in range(F):
            cx, cy = start + vel * f
            w[f] = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
        if not spec.large or np.all((w > MASK_THRESHOLD).mean(axis=(1, 2)) >= 0.5):
            return w
    raise ValueError("could not place a large blob covering half of every frame")


def generate_triplet(spec: GenSpec, index: int) -> RemovalTriplet:
    """Deterministic triplet for (spec.seed, index).

    The blob's composite weight w = exp(-d^2 / 2 r^2) is applied only inside
    the mask (w > 0.1), so unmasked source pixels equal the target exactly.
    """
    spec.validate()
    rng = np.random.default_rng([spec.seed, index])
    bg = _background(spec, rng)
    w = _blob_weights(spec, rng)
    mask = (w > MASK_THRESHOLD).astype(np.float64)
    w_in = w * mask
    source = (1.0 - w_in) * bg + w_in * spec.blob_amp
    return RemovalTriplet(source=source, target=bg, mask=mask)


def generate_dataset(spec: GenSpec, count: int, start: int = 0) -> list[RemovalTriplet]:
    return [generate_triplet(spec, i) for i in range(start, start + count)]


def stack(triplets):
    """Stack triplets into (source, target, mask) arrays of shape (N, F, H, W)."""
    return tuple(np.stack([getattr(tr, k) for tr in triplets]) for k in ("source", "target", "mask"))


# -- dataset directories -----------------------------------------------------


def triplet_paths(root, index: int):
    root = Path(root)
    return (root / f"{index:04d}_src.brt", root / f"{index:04d}_tgt.brt", root / f"{index:04d}_mask.brt")


def write_dataset(root, triplets, indices=None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    indices = list(range(len(triplets))) if indices is None else list(indices)
    for idx, tr in zip(indices, triplets):
        src, tgt, msk = triplet_paths(root, idx)
        write_tensor(src, tr.source)
        write_tensor(tgt, tr.target)
        write_tensor(msk, tr.mask)
    (root / "manifest.txt").write_text("".join(f"{i}\n" for i in indices))


def read_manifest(root) -> list[int]:
    path = Path(root) / "manifest.txt"
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return [int(line) for line in path.read_text().split()]


def read_triplet(root, index: int) -> RemovalTriplet:
    src, tgt, msk = triplet_paths(root, index)
    return RemovalTriplet(read_tensor(src), read_tensor(tgt), read_tensor(msk))


def read_dataset(root) -> list[RemovalTriplet]:
    return [read_triplet(root, i) for i in read_manifest(root)]


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    """Per-sample metrics; a field is None when its pixel set is empty."""

    unmasked_mse: float | None
    unmasked_psnr: float | None
    masked_mse: float | None
    removal_ratio: float | None
    temporal_consistency: float | None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_row(self) -> dict:
        return {k: ("" if v is None else v) for k, v in asdict(self).items()}


def psnr(mse: float, peak: float = PSNR_PEAK) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _masked_mean(values, sel):
    return float(values[sel].mean()) if np.any(sel) else None


def evaluate(output, triplet: RemovalTriplet) -> EvalReport:
    out = np.asarray(output, dtype=np.float64)
    src = np.asarray(triplet.source, dtype=np.float64)
    tgt = np.asarray(triplet.target, dtype=np.float64)
    inside = np.asarray(triplet.mask) > 0.5
    if out.shape != tgt.shape:
        raise ValueError(f"shape mismatch: output {out.shape} vs target {tgt.shape}")

    err = (out - tgt) ** 2
    unmasked_mse = _masked_mean(err, ~inside)
    masked_mse = _masked_mean(err, inside)
    src_masked = _masked_mean((src - tgt) ** 2, inside)
    removal = None
    if masked_mse is not None and src_masked:
        removal = 1.0 - masked_mse / src_masked

    temporal = None
    if out.shape[0] > 1:
        both = ~inside[1:] & ~inside[:-1]
        d_err = np.abs(np.diff(out, axis=0) - np.diff(tgt, axis=0))
        temporal = _masked_mean(d_err, both)

    return EvalReport(
        unmasked_mse=unmasked_mse,
        unmasked_psnr=None if unmasked_mse is None else psnr(unmasked_mse),
        masked_mse=masked_mse,
        removal_ratio=removal,
        temporal_consistency=temporal,
    )
