import numpy as np
import pytest
from skimage.metrics import structural_similarity

from deblur.errors import DimensionError
from deblur.forward_model import plan_sizes, shift_pair
from deblur.localization import (Placement, centered_offset, locate_image, locate_kernel, ssim,
                                 ssim_scan)

C1, C2 = 0.01 ** 2, 0.03 ** 2


def _embed(y, shape, offset):
    canvas = np.zeros(shape)
    canvas[offset[0]:offset[0] + y.shape[0], offset[1]:offset[1] + y.shape[1]] = y
    return canvas


def test_embedding_offset_7_3(rng):
    y = rng.random((24, 20))
    crop, p = locate_image(_embed(y, (40, 36), (7, 3)), y)
    assert p.offset == (7, 3)
    assert p.score == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(crop, y)


def test_random_embeddings(rng):
    y = rng.random((32, 32))
    for _ in range(20):
        off = tuple(int(v) for v in rng.integers(0, 32, size=2))
        _, p = locate_image(_embed(y, (63, 63), off), y)
        assert p.offset == off and p.score >= 1 - 1e-9


def test_same_size_forces_origin(rng):
    y = rng.random((16, 16))
    _, p = locate_image(rng.random((16, 16)), y)
    assert p.offset == (0, 0)


def test_exact_copy_beats_dimmed_copy(rng):
    y = rng.random((16, 16))
    canvas = _embed(y, (50, 50), (7, 3))
    canvas[20:36, 20:36] = 0.5 * y
    _, p = locate_image(canvas, y)
    assert p.offset == (7, 3)


def test_translation_covariance(rng):
    y = rng.random((20, 20))
    _, p0 = locate_image(_embed(y, (45, 45), (4, 9)), y)
    _, p1 = locate_image(_embed(y, (45, 45), (4 + 6, 9 - 2)), y)
    assert (p1.offset[0] - p0.offset[0], p1.offset[1] - p0.offset[1]) == (6, -2)


def test_ties_prefer_first_row_major():
    y = np.full((8, 8), 0.5)
    _, p = locate_image(np.full((12, 12), 0.5), y)
    assert p.offset == (0, 0)


def test_canvas_too_small(rng):
    with pytest.raises(DimensionError):
        locate_image(rng.random((10, 30)), rng.random((12, 12)))


def test_ssim_matches_reference(rng):
    a = rng.random((40, 37))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False, data_range=1.0)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-12)


def test_ssim_color_averages_channels(rng):
    a, b = rng.random((30, 30, 3)), rng.random((30, 30, 3))
    expected = np.mean([ssim(a[..., c], b[..., c]) for c in range(3)])
    assert ssim(a, b) == pytest.approx(expected, abs=1e-12)


def test_ssim_identity_and_inverse():
    a = np.kron(np.array([[0, 1] * 6, [1, 0] * 6] * 6, dtype=float), np.ones((2, 2)))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, 1 - a) < 0


def test_ssim_constant_closed_form():
    a, b = 0.25, 0.75
    expected = (2 * a * b + C1) / (a * a + b * b + C1)
    assert ssim(np.full((20, 20), a), np.full((20, 20), b)) == pytest.approx(expected, abs=1e-12)


def test_ssim_shape_mismatch(rng):
    with pytest.raises(DimensionError):
        ssim(rng.random((5, 5)), rng.random((5, 6)))


def test_scan_matches_pointwise_ssim(rng):
    canvas, y = rng.random((30, 28)), rng.random((20, 20))
    scores = ssim_scan(canvas, y)
    assert scores.shape == (11, 9)
    for r, c in [(0, 0), (3, 7), (10, 8)]:
        assert scores[r, c] == pytest.approx(ssim(canvas[r:r + 20, c:c + 20], y), abs=1e-10)


def test_locate_kernel_at_center_unchanged(rng):
    plan = plan_sizes((20, 20))
    k = rng.random(plan.k_size)
    k /= k.sum()
    out = locate_kernel(k, Placement(centered_offset(plan), 1.0), plan)
    np.testing.assert_array_equal(out, k)


def test_round_trip_with_shift_pair(rng):
    plan = plan_sizes((40, 40))  # 20x20 kernel, 59x59 canvas
    k = np.zeros(plan.k_size)
    k[7:13, 8:12] = rng.random((6, 4))
    k /= k.sum()
    x = rng.random(plan.x_size)
    x[:6], x[-6:], x[:, :6], x[:, -6:] = 0, 0, 0, 0
    tau = (3, -4)
    k_shift, x_shift = shift_pair(k, x, tau)
    y = x[centered_offset(plan)[0]:][:40, centered_offset(plan)[1]:][:, :40]
    _, placement = locate_image(x_shift, y)
    c = centered_offset(plan)
    assert placement.offset == (c[0] + tau[0], c[1] + tau[1])
    recovered = locate_kernel(k_shift, placement, plan)
    np.testing.assert_allclose(recovered, k, atol=1e-6)
    assert recovered.sum() == pytest.approx(1.0, abs=1e-6)


def test_locate_kernel_renormalizes_clipped_mass():
    plan = plan_sizes((10, 10))
    k = np.zeros(plan.k_size)
    k[0, 0], k[2, 2] = 0.5, 0.5
    c = centered_offset(plan)
    out = locate_kernel(k, Placement((c[0] - 1, c[1]), 1.0), plan)
    assert out.sum() == pytest.approx(1.0)
    assert out[1, 2] == pytest.approx(1.0)
