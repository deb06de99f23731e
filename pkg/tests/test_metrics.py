import numpy as np
import pytest

from radiance.metrics import (MetricsError, MetricsReport, compute_report,
                              feasible_scales, mae, ms_ssim, psnr, rmse)
from radiance.oracles import sliding_window_ms_ssim


class TestMaeRmse:
    def test_identical(self, rng):
        x = rng.uniform(0, 1, (16, 16))
        assert mae(x, x) == 0.0
        assert rmse(x, x) == 0.0

    def test_constant_offset(self, rng):
        x = rng.uniform(0, 0.9, (16, 16))
        assert mae(x, x + 0.1) == pytest.approx(0.1, rel=1e-12)
        assert rmse(x, x + 0.1) == pytest.approx(0.1, rel=1e-12)

    def test_half_pixels_differ(self):
        # half the pixels off by 0.2: mae 0.1, rmse sqrt(0.02)
        x = np.zeros((4, 4))
        y = x.copy()
        y[:2] = 0.2
        assert mae(x, y) == pytest.approx(0.1, rel=1e-12)
        assert rmse(x, y) == pytest.approx(np.sqrt(0.02), rel=1e-12)

    def test_rmse_dominates_mae(self, rng):
        for _ in range(100):
            a = rng.uniform(0, 1, (8, 8))
            b = rng.uniform(0, 1, (8, 8))
            assert rmse(a, b) >= mae(a, b)

    def test_shape_mismatch(self, rng):
        with pytest.raises(MetricsError):
            mae(rng.uniform(0, 1, (4, 4)), rng.uniform(0, 1, (5, 5)))


class TestPsnr:
    def test_identical_capped(self, rng):
        x = rng.uniform(0, 1, (8, 8))
        assert psnr(x, x) == 100.0

    def test_spot_values(self):
        x = np.zeros((10, 10))
        assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)
        assert psnr(x, x + 1.0) == pytest.approx(0.0, abs=1e-9)

    def test_peak_parameter(self):
        x = np.zeros((10, 10))
        assert psnr(x, x + 25.5, peak=255.0) == pytest.approx(20.0, abs=1e-9)


class TestMsSsim:
    def test_identity(self, rng):
        x = rng.uniform(0, 1, (32, 32))
        assert ms_ssim(x, x) == pytest.approx(1.0, abs=1e-6)

    def test_inverted_image_scores_low(self, rng):
        x = rng.uniform(0, 1, (32, 32))
        assert ms_ssim(x, 1.0 - x) < 0.5

    def test_matches_sliding_window_oracle(self, rng):
        for _ in range(3):
            a = rng.uniform(0, 1, (32, 32))
            b = np.clip(a + rng.normal(0, 0.2, (32, 32)), 0, 1)
            assert ms_ssim(a, b) == pytest.approx(sliding_window_ms_ssim(a, b), abs=1e-6)

    def test_symmetry(self, rng):
        a = rng.uniform(0, 1, (32, 32))
        b = rng.uniform(0, 1, (32, 32))
        assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), abs=1e-12)
        assert mae(a, b) == mae(b, a)
        assert rmse(a, b) == rmse(b, a)
        assert psnr(a, b) == psnr(b, a)

    def test_feasible_scale_truncation(self):
        assert feasible_scales((32, 32)) == 2
        assert feasible_scales((64, 64)) == 3
        assert feasible_scales((11, 11)) == 1
        assert feasible_scales((10, 10)) == 0

    def test_too_small_rejected(self, rng):
        with pytest.raises(MetricsError):
            ms_ssim(rng.uniform(0, 1, (8, 8)), rng.uniform(0, 1, (8, 8)))

    def test_common_crop_consistency(self, rng):
        # shifting both maps by the same offset and cropping to the valid
        # region scores exactly like the directly cropped pair
        a = rng.uniform(0, 1, (40, 40))
        b = np.clip(a + rng.normal(0, 0.1, (40, 40)), 0, 1)
        direct = ms_ssim(a[4:36, 3:35], b[4:36, 3:35])
        shifted_a = a[4:36, 3:35].copy()
        shifted_b = b[4:36, 3:35].copy()
        assert ms_ssim(shifted_a, shifted_b) == pytest.approx(direct, abs=1e-12)

    def test_range(self, rng):
        for _ in range(5):
            a = rng.uniform(0, 1, (32, 32))
            b = rng.uniform(0, 1, (32, 32))
            assert -1.0 <= ms_ssim(a, b) <= 1.0


class TestReport:
    def test_identity_report(self, rng):
        x = rng.uniform(0, 1, (32, 32))
        rep = compute_report([(x, x)])
        assert rep.mae == 0.0 and rep.rmse == 0.0
        assert rep.psnr_db == 100.0 and rep.psnr_capped == 1
        assert rep.ms_ssim == pytest.approx(1.0, abs=1e-6)
        assert rep.n_samples == 1

    def test_row_format(self, rng):
        x = rng.uniform(0, 1, (32, 32))
        rep = compute_report([(x, np.clip(x + 0.05, 0, 1))])
        row = rep.row()
        assert row.split("\t")[0] == "1"
        assert MetricsReport.header().count("\t") == row.count("\t")

    def test_invariant_rmse_ge_mae(self, rng):
        pairs = [(rng.uniform(0, 1, (32, 32)), rng.uniform(0, 1, (32, 32)))
                 for _ in range(4)]
        rep = compute_report(pairs)
        assert rep.rmse >= rep.mae >= 0.0

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            compute_report([])
