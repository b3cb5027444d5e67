import json
import math

import numpy as np
import pytest

from deblur.errors import DimensionError
from deblur.metrics import MetricReport, band_index, evaluate_pair, fbe, psnr, vif, write_reports_csv


def test_psnr_cap():
    a = np.full((8, 8), 0.3)
    assert psnr(a, a) == 100.0


def test_psnr_uniform_error():
    a = np.full((16, 16), 0.4)
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_direct_formula_and_symmetry(rng):
    a, b = rng.random((20, 30)), rng.random((20, 30))
    mse = sum((a[i, j] - b[i, j]) ** 2 for i in range(20) for j in range(30)) / 600
    assert psnr(a, b) == pytest.approx(-10 * math.log10(mse), abs=1e-9)
    assert psnr(a, b) == psnr(b, a)


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionError):
        psnr(np.zeros((3, 3)), np.zeros((3, 4)))


def _textured(rng, n=96):
    from skimage import data
    from skimage.transform import resize
    return resize(data.camera() / 255.0, (n, n), anti_aliasing=True)


def test_vif_identity(rng):
    a = _textured(rng)
    assert vif(a, a) == pytest.approx(1.0, abs=1e-6)


def test_vif_constant_distortion(rng):
    a = _textured(rng)
    assert vif(a, np.full_like(a, a.mean())) < 0.01


def test_vif_contrast_enhancement_exceeds_one(rng):
    a = 0.25 + 0.5 * _textured(rng)  # mid-range so the clip stays inactive
    dist = np.clip(1.2 * (a - a.mean()) + a.mean(), 0, 1)
    assert vif(a, dist) > 1


def test_vif_matches_reference_implementation(rng):
    full_ref = pytest.importorskip("sewar.full_ref")
    a = _textured(rng)
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    assert vif(a, b) == pytest.approx(full_ref.vifp(a * 255, b * 255), abs=1e-9)


def test_vif_color_uses_luma(rng):
    a = rng.random((64, 64, 3))
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
    w = np.array([0.299, 0.587, 0.114])
    assert vif(a, b) == pytest.approx(vif(a @ w, b @ w), abs=1e-12)


def test_fbe_identity(rng):
    k = rng.random((13, 13))
    assert np.all(fbe(k, k) == 0)


@pytest.mark.parametrize("alpha", [0.5, 2.0])
def test_fbe_scale_law(rng, alpha):
    k = rng.random((13, 13))
    k /= k.sum()
    np.testing.assert_allclose(fbe(k, alpha * k), abs(1 - alpha), atol=1e-9)


def _dft(a):
    n, m = a.shape
    out = np.zeros((n, m), dtype=complex)
    for u in range(n):
        for v in range(m):
            acc = 0j
            for i in range(n):
                for j in range(m):
                    acc += a[i, j] * np.exp(-2j * np.pi * (u * i / n + v * j / m))
            out[u, v] = acc
    return out


def _band_of(u, v, n, m):
    fu = (u if u < (n + 1) // 2 else u - n) / n
    fv = (v if v < (m + 1) // 2 else v - m) / m
    return min(int(math.hypot(fu, fv) / 0.1), 4)


def test_fbe_shift_against_direct_dft(rng):
    k = rng.random((9, 9))
    k /= k.sum()
    shifted = np.roll(k, 1, axis=1)
    shifted[:, 0] = 0
    ft, fe = _dft(k), _dft(shifted)
    sums, counts = np.zeros(5), np.zeros(5)
    for u in range(9):
        for v in range(9):
            b = _band_of(u, v, 9, 9)
            sums[b] += abs(ft[u, v] - fe[u, v]) / max(abs(ft[u, v]), 1e-12)
            counts[b] += 1
    np.testing.assert_allclose(fbe(k, shifted), sums / counts, atol=1e-9)


def test_band_index_layout():
    idx = band_index((13, 13))
    assert idx[0, 0] == 0 and idx.max() == 4
    assert idx[6, 6] == 4  # corner bin past the Nyquist radius


def test_fbe_pads_smaller_kernel(rng):
    k = rng.random((5, 5))
    big = np.zeros((7, 7))
    big[:5, :5] = k
    np.testing.assert_allclose(fbe(k, big), fbe(big, big), atol=1e-12)


def test_evaluate_pair_perfect(rng):
    x = _textured(rng, 64)
    k = rng.random((5, 5))
    rep = evaluate_pair(x, x, k, k)
    assert rep.psnr == 100.0
    assert rep.ssim == pytest.approx(1.0)
    assert rep.vif == pytest.approx(1.0, abs=1e-6)
    assert rep.fbe == [0.0] * 5


def test_evaluate_pair_without_kernel(rng):
    x = _textured(rng, 64)
    d = evaluate_pair(np.clip(x + 0.02, 0, 1), x).to_dict()
    assert {"psnr", "ssim", "vif"} <= set(d) and "fbe" not in d


def test_report_round_trip(tmp_path, rng):
    x = _textured(rng, 64)
    rep = evaluate_pair(x * 0.9, x, np.ones((3, 3)) / 9, np.ones((3, 3)) / 9)
    rep.to_json(tmp_path / "r.json")
    back = MetricReport.from_dict(json.loads((tmp_path / "r.json").read_text()))
    assert back.to_dict() == rep.to_dict()


def test_reports_csv(tmp_path):
    rows = [{"case": "a", "config_hash": "h", "psnr": 20.0, "ssim": 0.5, "vif": 0.4,
             "fbe": [0.1, 0.2, 0.3, 0.4, 0.5]},
            {"case": "b", "config_hash": "h", "error": "unreadable"}]
    write_reports_csv(tmp_path / "m.csv", rows)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("case,config_hash,psnr,ssim,vif,fbe0")
    assert lines[1].startswith("a,h,20.0,0.5,0.4,0.1") and lines[2].endswith("unreadable")
