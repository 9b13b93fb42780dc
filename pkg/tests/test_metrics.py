import math

import numpy as np
import pytest
from scipy.ndimage import convolve
from skimage.metrics import structural_similarity

from textpainter.metrics import MetricsReport, evaluate_pairs, fid, fid_from_moments, psnr, ssim


def ssim_reference(a, b):
    """Second implementation: 2-D Gaussian kernel, scipy convolve, crop to valid windows."""
    x = np.arange(11) - 5.0
    g1 = np.exp(-x ** 2 / (2 * 1.5 ** 2))
    k = np.outer(g1, g1)
    k /= k.sum()
    c1, c2 = (0.01) ** 2, (0.03) ** 2
    vals = []
    for ch in range(a.shape[2]):
        p, q = a[..., ch], b[..., ch]
        f = lambda z: convolve(z, k, mode="constant")[5:-5, 5:-5]  # noqa: E731
        mu_p, mu_q = f(p), f(q)
        s_pp = f(p * p) - mu_p ** 2
        s_qq = f(q * q) - mu_q ** 2
        s_pq = f(p * q) - mu_p * mu_q
        m = ((2 * mu_p * mu_q + c1) * (2 * s_pq + c2)) / ((mu_p ** 2 + mu_q ** 2 + c1) * (s_pp + s_qq + c2))
        vals.append(m.mean())
    return float(np.mean(vals))


def fid_eig(a, b):
    mu_a, mu_b = a.mean(0), b.mean(0)
    ca, cb = np.cov(a, rowvar=False), np.cov(b, rowvar=False)
    ev = np.linalg.eigvals(ca @ cb)
    return float(((mu_a - mu_b) ** 2).sum() + np.trace(ca) + np.trace(cb) - 2 * np.sqrt(ev.real.clip(0)).sum())


# ---------------------------------------------------------------- PSNR


def test_psnr_cases(rng):
    a = rng.random((16, 16, 3)) * 0.9
    assert psnr(a, a) == math.inf
    assert abs(psnr(a, a + 0.1) - 20.0) < 1e-9
    b = rng.random((16, 16, 3))
    mse = sum((a[i, j, c] - b[i, j, c]) ** 2 for i in range(16) for j in range(16) for c in range(3)) / (16 * 16 * 3)
    assert abs(psnr(a, b) - 10 * math.log10(1 / mse)) < 1e-9
    assert psnr(a, b) == psnr(b, a)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


# ---------------------------------------------------------------- SSIM


def test_ssim_trivial(rng):
    a = rng.random((24, 24, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    c = np.full((20, 20, 3), 0.5)
    assert ssim(c, c) == pytest.approx(1.0, abs=1e-12)


def test_ssim_matches_references(rng):
    a, b = rng.random((32, 40, 3)), rng.random((32, 40, 3))
    ours = ssim(a, b)
    assert abs(ours - ssim_reference(a, b)) < 1e-6
    sk = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                               data_range=1.0, channel_axis=-1)
    assert abs(ours - sk) < 1e-6
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_ssim_bounded(rng):
    for _ in range(1000):
        a = rng.random((11, 11, 1))
        b = rng.random((11, 11, 1)) if rng.random() < 0.5 else 1 - a
        v = ssim(a, b)
        assert -1 <= v <= 1


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 30, 3)), np.zeros((10, 30, 3)))


def test_ssim_accepts_uint8(rng):
    a = (rng.random((16, 16, 3)) * 255).astype(np.uint8)
    assert ssim(a, a) == pytest.approx(1.0)


# ---------------------------------------------------------------- FID


def test_fid_self_is_zero(rng):
    for _ in range(5):
        a = rng.normal(size=(50, 6))
        assert abs(fid(a, a)) < 1e-6


def test_fid_closed_form_1d():
    assert abs(fid_from_moments(0.0, 1.0, 3.0, 1.0) - 9.0) < 1e-6


def test_fid_matches_eigensolver(rng):
    a = rng.normal(size=(64, 4))
    b = rng.normal(loc=0.5, scale=1.3, size=(64, 4)) @ rng.normal(size=(4, 4))
    assert abs(fid(a, b) - fid_eig(a, b)) < 1e-5
    assert abs(fid(a, b) - fid(b, a)) < 1e-6


def test_fid_needs_two_vectors():
    with pytest.raises(ValueError):
        fid(np.zeros((1, 3)), np.zeros((4, 3)))


def test_fid_reports_non_psd():
    with pytest.raises(np.linalg.LinAlgError):
        fid_from_moments(np.zeros(2), np.diag([1.0, -1.0]), np.zeros(2), np.eye(2))


# ---------------------------------------------------------------- report


def test_report_identical_pairs(rng):
    imgs = [(rng.random((16, 20, 3)) * 255).astype(np.uint8) for _ in range(3)]
    r = evaluate_pairs(imgs, imgs)
    assert isinstance(r, MetricsReport)
    assert r.ssim == pytest.approx(1.0) and r.psnr == math.inf and r.n_pairs == 3
    assert abs(r.fid) < 1e-6


def test_report_nonidentical(rng):
    a = [(rng.random((16, 20, 3)) * 255).astype(np.uint8) for _ in range(3)]
    b = [(rng.random((16, 20, 3)) * 255).astype(np.uint8) for _ in range(3)]
    r = evaluate_pairs(a, b)
    assert r.ssim < 1 and math.isfinite(r.psnr) and r.fid >= 0
    assert set(r.as_dict()) == {"fid", "ssim", "psnr", "n_pairs"}
