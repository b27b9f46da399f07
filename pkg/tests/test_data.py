import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpbridge.data import (
    MASK_THRESHOLD,
    EvalReport,
    GenSpec,
    RemovalTriplet,
    evaluate,
    generate_dataset,
    generate_triplet,
    psnr,
    read_dataset,
    read_manifest,
    write_dataset,
)

SPEC = GenSpec()


def test_triplet_structure():
    tr = generate_triplet(SPEC, 0)
    assert tr.source.shape == (4, 16, 16)
    assert set(np.unique(tr.mask)) <= {0.0, 1.0}
    assert tr.target.min() >= -1.0 and tr.target.max() <= 1.0
    assert tr.mask.sum() > 0


def test_deterministic():
    a, b = generate_triplet(SPEC, 17), generate_triplet(SPEC, 17)
    for k in ("source", "target", "mask"):
        assert getattr(a, k).tobytes() == getattr(b, k).tobytes()
    c = generate_triplet(replace(SPEC, seed=1), 17)
    assert not np.array_equal(a.target, c.target)


def test_zero_amplitude_blob_is_invisible():
    spec = replace(SPEC, blob_amp=0.0)
    tr = generate_triplet(spec, 3)
    # amp 0 still darkens toward 0 inside the mask, nowhere else
    assert tr.mask.sum() > 0
    outside = tr.mask == 0
    np.testing.assert_array_equal(tr.source[outside], tr.target[outside])


def test_feather_bound_many_pairs():
    worst = 0.0
    for seed in range(100):
        spec = replace(SPEC, seed=seed)
        for index in range(100):
            tr = generate_triplet(spec, index)
            outside = tr.mask == 0
            worst = max(worst, float(np.max(np.abs(tr.source - tr.target)[outside], initial=0.0)))
    assert worst <= MASK_THRESHOLD * SPEC.blob_amp


def test_large_variant_covers_half_of_every_frame():
    spec = replace(SPEC, large=True)
    for i in range(50):
        tr = generate_triplet(spec, i)
        assert np.all(tr.mask.mean(axis=(1, 2)) >= 0.5)


def test_degenerate_specs():
    for bad in (
        replace(SPEC, frames=0),
        replace(SPEC, radius_range=(3.0, 1.0)),
        replace(SPEC, radius_range=(1.0, 8.0)),
        replace(SPEC, blob_amp=-1.0),
    ):
        with pytest.raises(ValueError):
            generate_triplet(bad, 0)


def test_triplet_shape_check():
    with pytest.raises(ValueError):
        RemovalTriplet(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)), np.zeros((1, 3, 3)))


def test_dataset_roundtrip(tmp_path):
    data = generate_dataset(SPEC, 3)
    write_dataset(tmp_path, data)
    assert read_manifest(tmp_path) == [0, 1, 2]
    back = read_dataset(tmp_path)
    for a, b in zip(data, back):
        np.testing.assert_array_equal(a.source.astype(np.float32), b.source)
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "missing")


# -- metrics -----------------------------------------------------------------


def test_perfect_removal():
    tr = generate_triplet(SPEC, 1)
    r = evaluate(tr.target, tr)
    assert r.unmasked_mse == 0.0
    assert r.removal_ratio == 1.0
    assert r.temporal_consistency == 0.0
    assert r.unmasked_psnr == math.inf


def test_nothing_removed():
    tr = generate_triplet(SPEC, 1)
    assert evaluate(tr.source, tr).removal_ratio == pytest.approx(0.0, abs=1e-15)


def test_psnr_example():
    assert psnr(0.01) == pytest.approx(26.020599913279625, rel=1e-12)


def test_all_one_mask_reports_absent():
    tr = RemovalTriplet(np.ones((2, 3, 3)), np.zeros((2, 3, 3)), np.ones((2, 3, 3)))
    r = evaluate(np.zeros((2, 3, 3)), tr)
    assert r.unmasked_mse is None and r.unmasked_psnr is None and r.temporal_consistency is None
    assert r.removal_ratio == 1.0
    assert r.as_row()["unmasked_mse"] == ""
    assert EvalReport.columns()[0] == "unmasked_mse"


def test_shape_mismatch():
    tr = generate_triplet(SPEC, 0)
    with pytest.raises(ValueError):
        evaluate(np.zeros((3, 16, 16)), tr)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2**31))
def test_metric_invariances(index, seed):
    tr = generate_triplet(SPEC, index)
    rng = np.random.default_rng(seed)
    out = tr.target + 0.3 * rng.standard_normal(tr.target.shape)
    base = evaluate(out, tr)
    inside = tr.mask > 0.5
    noise = rng.standard_normal(out.shape)
    out_in = np.where(inside, out + noise, out)
    out_out = np.where(inside, out, out + noise)
    r_in, r_out = evaluate(out_in, tr), evaluate(out_out, tr)
    assert r_in.unmasked_mse == base.unmasked_mse
    assert r_in.temporal_consistency == base.temporal_consistency
    assert r_out.removal_ratio == base.removal_ratio
    assert r_out.masked_mse == base.masked_mse
    assert base.removal_ratio <= 1.0
