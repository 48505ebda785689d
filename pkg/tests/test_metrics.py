import math

import numpy as np
import pytest

from astn.metrics import (
    CSV_HEADER,
    MetricsReport,
    MetricsRow,
    PSNR_CAP_DB,
    _gaussian_window,
    psnr,
    rmse,
    ssim,
    timed,
)


def _psnr_scalar_reference(ref, test, data_range=1.0):
    total = 0.0
    h, w = ref.shape
    for i in range(h):
        for j in range(w):
            d = ref[i, j] - test[i, j]
            total += d * d
    mse = total / (h * w)
    return 10.0 * math.log10(data_range * data_range / mse)


def _rmse_scalar_reference(ref, test):
    total = 0.0
    h, w = ref.shape
    for i in range(h):
        for j in range(w):
            d = ref[i, j] - test[i, j]
            total += d * d
    return math.sqrt(total / (h * w))


def _ssim_direct_reference(ref, test, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Unoptimized direct-convolution SSIM: plain python loops per window."""
    w = _gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    h, ww = ref.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(ww - window + 1):
            mu1 = mu2 = m11 = m22 = m12 = 0.0
            for p in range(window):
                for q in range(window):
                    wv = w[p, q]
                    a = ref[i + p, j + q]
                    b = test[i + p, j + q]
                    mu1 += wv * a
                    mu2 += wv * b
                    m11 += wv * a * a
                    m22 += wv * b * b
                    m12 += wv * a * b
            s11 = m11 - mu1 * mu1
            s22 = m22 - mu2 * mu2
            s12 = m12 - mu1 * mu2
            vals.append(
                ((2 * mu1 * mu2 + c1) * (2 * s12 + c2))
                / ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2))
            )
    return sum(vals) / len(vals)


def test_psnr_identical_images_cap(rng):
    img = rng.random((16, 16))
    assert psnr(img, img) == PSNR_CAP_DB


def test_psnr_constant_offset():
    ref = np.full((20, 20), 0.3)
    test = np.full((20, 20), 0.4)
    assert psnr(ref, test) == pytest.approx(20.0, abs=1e-10)


def test_psnr_scalar_reference(rng):
    ref, test = rng.random((13, 17)), rng.random((13, 17))
    assert psnr(ref, test) == pytest.approx(_psnr_scalar_reference(ref, test), abs=1e-12)


def test_rmse_trivial_cases(rng):
    img = rng.random((8, 8))
    assert rmse(img, img) == 0.0
    assert rmse(img, img + 0.1) == pytest.approx(0.1, abs=1e-12)


def test_rmse_scalar_reference(rng):
    ref, test = rng.random((11, 9)), rng.random((11, 9))
    assert rmse(ref, test) == pytest.approx(_rmse_scalar_reference(ref, test), abs=1e-12)


def test_ssim_identical_is_one(rng):
    img = rng.random((24, 24))
    assert ssim(img, img) == 1.0


def test_ssim_inverted_high_contrast_low():
    rng = np.random.default_rng(3)
    img = (rng.random((32, 32)) > 0.5).astype(np.float64)
    assert ssim(img, 1.0 - img) < 0.5


def test_ssim_direct_convolution_reference(rng):
    ref, test = rng.random((20, 20)), rng.random((20, 20))
    assert ssim(ref, test) == pytest.approx(_ssim_direct_reference(ref, test), abs=1e-6)


def test_ssim_window_size_limit(rng):
    with pytest.raises(ValueError):
        ssim(rng.random((8, 8)), rng.random((8, 8)))


def test_metric_symmetry(rng):
    a, b = rng.random((16, 16)), rng.random((16, 16))
    assert rmse(a, b) == rmse(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)


def test_psnr_rmse_consistency(rng):
    a, b = rng.random((12, 12)), rng.random((12, 12))
    r = rmse(a, b)
    assert psnr(a, b) == pytest.approx(20.0 * math.log10(1.0 / r), abs=1e-10)


def test_monotone_degradation():
    rng = np.random.default_rng(5)
    base = rng.random((32, 32)) * 0.5 + 0.25
    noise = rng.standard_normal((32, 32))
    ps, ss, rs = [], [], []
    for amp in (0.01, 0.02, 0.05, 0.1, 0.2):
        noisy = base + amp * noise
        ps.append(psnr(base, noisy))
        ss.append(ssim(base, noisy))
        rs.append(rmse(base, noisy))
    assert all(x > y for x, y in zip(ps, ps[1:]))
    assert all(x > y for x, y in zip(ss, ss[1:]))
    assert all(x < y for x, y in zip(rs, rs[1:]))


def test_shape_mismatch_errors(rng):
    with pytest.raises(ValueError):
        psnr(rng.random((4, 4)), rng.random((4, 5)))
    with pytest.raises(ValueError):
        rmse(rng.random((4, 4)), rng.random((5, 4)))


def test_timed_noop_fast():
    _, secs = timed(lambda: None)
    assert secs < 1e-3


def test_timed_scales_linearly():
    # op large enough (~ms) that scheduler jitter stays inside the 30% band
    arr = np.random.default_rng(0).random(2_000_000)

    def once():
        return float((arr * arr).sum())

    def ten():
        return [once() for _ in range(10)]

    once()  # touch caches
    t1 = min(timed(once)[1] for _ in range(7))
    t10 = min(timed(ten)[1] for _ in range(7))
    assert 10 * t1 * 0.7 <= t10 <= 10 * t1 * 1.3


def test_metrics_row_validation():
    with pytest.raises(ValueError):
        MetricsRow("ast", "ddim", 10, 30.0, 0.01, 1.5, 0.1, 0)
    with pytest.raises(ValueError):
        MetricsRow("ast", "ddim", 10, 30.0, -0.01, 0.9, 0.1, 0)


def test_report_csv_round_trip(tmp_path):
    report = MetricsReport(
        rows=[
            MetricsRow("full", "ddpm", 1000, 38.7, 0.0116, 0.973, 16.4, 42),
            MetricsRow("ast", "ddim", 150, 39.1, 0.0111, 0.974, 2.4, 42),
        ]
    )
    path = tmp_path / "metrics.csv"
    report.write_csv(path)
    loaded = MetricsReport.read_csv(path)
    assert len(loaded.rows) == 2
    for orig, back in zip(report.rows, loaded.rows):
        assert back.regime == orig.regime and back.sampler == orig.sampler
        assert back.steps == orig.steps and back.seed == orig.seed
        assert back.psnr_db == pytest.approx(orig.psnr_db, abs=1e-6)
        assert back.rmse == pytest.approx(orig.rmse, rel=1e-7)
    # header comment states per-image timing
    assert "per image" in path.read_text().splitlines()[0]


def test_report_csv_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(",".join(CSV_HEADER) + "\nfull,ddim,abc,1,2,0.5,1,0\n")
    with pytest.raises(ValueError, match=":2"):
        MetricsReport.read_csv(path)


def test_report_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(ValueError, match="header"):
        MetricsReport.read_csv(path)
