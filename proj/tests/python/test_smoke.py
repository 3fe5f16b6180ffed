"""Smoke tests for the _fluencebench extension module."""

import numpy as np
import pytest

import _fluencebench as fb


def test_field_roundtrip(tmp_path):
    arr = np.random.default_rng(7).random((2, 3, 4, 5), dtype=np.float32)
    path = str(tmp_path / "field.farr")
    fb.write_field(path, arr, spacing_mm=[3.0, 2.0, 1.5])
    back, spacing = fb.read_field(path)
    assert spacing == [3.0, 2.0, 1.5]
    np.testing.assert_array_equal(back, arr)


def test_bad_file_rejected(tmp_path):
    path = tmp_path / "bogus.farr"
    path.write_bytes(b"XXXXY\n")
    with pytest.raises(ValueError):
        fb.read_field(str(path))


def test_normalize_and_resample():
    arr = np.full((1, 1, 4, 4), 40.0, dtype=np.float32)
    out = fb.normalize_ct(arr, -160.0, 240.0)
    np.testing.assert_allclose(out, 0.5)
    big, spacing = fb.resample_inplane(arr, 8, 8, spacing_mm=[1.0, 1.0, 1.0])
    assert big.shape == (1, 1, 8, 8)
    np.testing.assert_allclose(big, 40.0, rtol=1e-6)
    assert spacing[1] == pytest.approx(3.0 / 7.0)


def test_perturbations_are_deterministic():
    rng = np.random.default_rng(11)
    arr = rng.random((1, 2, 16, 16), dtype=np.float32)
    a = fb.gaussian_noise(arr, 0.1, seed=42)
    b = fb.gaussian_noise(arr, 0.1, seed=42)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, arr)
    np.testing.assert_array_equal(fb.gaussian_noise(arr, 0.0, seed=1), arr)

    biased = fb.bias_field(arr, 0.3, offset=0.05, seed=3)
    assert biased.shape == arr.shape
    np.testing.assert_array_equal(fb.bias_field(arr, 0.0, 0.0, seed=3), arr)

    ident = fb.rigid_transform(arr, 0.0, shift_mm=[0.0, 0.0])
    np.testing.assert_allclose(ident, arr, atol=1e-6)


def test_metrics_match_reference_values():
    a = np.random.default_rng(5).random((32, 32), dtype=np.float32)
    assert fb.ssim(a, a, 1.0) == pytest.approx(1.0, abs=1e-9)

    gt = np.full((2, 4, 4), 10.0, dtype=np.float32)
    mean, per_beam = fb.energy_error_pct(1.1 * gt, gt)
    assert mean == pytest.approx(10.0)
    assert len(per_beam) == 2

    assert fb.quantile([1.0, 2.0, 3.0, 4.0], 0.75) == 3.25

    res = fb.wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0], [0.0] * 5)
    assert res["p_two_sided"] == 0.0625
    assert res["exact"]


def test_dvh_step_function():
    dose = np.zeros((1, 1, 4, 4), dtype=np.float32)
    masks = np.zeros((1, 1, 4, 4), dtype=np.float32)
    dose[0, 0, :2, :] = 2.0
    masks[0, 0, :2, :] = 1.0
    edges, fractions = fb.dvh(dose, masks, 0, [0.0, 1.0, 2.0, 3.0])
    assert fractions == [1.0, 1.0, 1.0, 0.0]


def test_phantom_case_generation():
    case = fb.generate_case(123)
    assert case["ct"].shape == (1, 16, 32, 32)
    assert case["masks"].shape == (4, 16, 32, 32)
    assert set(np.unique(case["masks"])) <= {0.0, 1.0}
    assert case["dose"].min() >= 0.0
    assert case["fluence"].min() >= 0.0
    assert len(case["gantry_angles_deg"]) == 9
    case2 = fb.generate_case(123)
    np.testing.assert_array_equal(case["dose"], case2["dose"])


def test_bev_projection_shape_and_linearity():
    vol = np.random.default_rng(9).random((1, 3, 9, 9), dtype=np.float32)
    p = fb.bev_projection(vol, 30.0)
    assert p.shape == (9, 3)
    p2 = fb.bev_projection(2.0 * vol, 30.0)
    np.testing.assert_allclose(p2, 2.0 * p, rtol=1e-4)


def test_subsampling_nests():
    ids = [f"case_{i}" for i in range(12)]
    small = fb.subsample_cases(ids, 0.25, seed=5)
    large = fb.subsample_cases(ids, 0.75, seed=5)
    assert len(small) == 3
    assert set(small) <= set(large)
