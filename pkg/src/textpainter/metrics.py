"""PSNR, SSIM and FID over generated vs ground-truth text crops.

Images are float arrays in [0, 1] shaped (H, W) or (H, W, C), or uint8
(converted on entry).  FID embeddings come from a frozen random conv stack
unless another extractor is supplied, so FID values here are only
comparable with each other, not with Inception-based numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from numpy.lib.stride_tricks import sliding_window_view

from .losses import RandomFeatures

SSIM_WIN = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
EIG_TOL = 1e-6


@dataclass
class MetricsReport:
    fid: float
    ssim: float
    psnr: float
    n_pairs: int

    def as_dict(self):
        return asdict(self)


def as_unit(img):
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def _check_pair(a, b):
    a, b = as_unit(a), as_unit(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    a, b = _check_pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    # separable Gaussian, valid region only
    x = np.tensordot(sliding_window_view(x, len(g), axis=0), g, axes=([-1], [0]))
    return np.tensordot(sliding_window_view(x, len(g), axis=1), g, axes=([-1], [0]))


def _ssim_channel(a, b, g):
    c1, c2 = K1 ** 2, K2 ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a ** 2
    sbb = _filter_valid(b * b, g) - mu_b ** 2
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    return np.mean(num / den)


def ssim(a, b):
    """Mean SSIM over all fully-inside 11x11 Gaussian windows (per channel, then averaged)."""
    a, b = _check_pair(a, b)
    if a.shape[0] < SSIM_WIN or a.shape[1] < SSIM_WIN:
        raise ValueError(f"image {a.shape[:2]} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    g = gaussian_window()
    if a.ndim == 2:
        return float(_ssim_channel(a, b, g))
    return float(np.mean([_ssim_channel(a[..., c], b[..., c], g) for c in range(a.shape[2])]))


def _sqrt_psd(m):
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    if vals.min() < -EIG_TOL:
        raise np.linalg.LinAlgError(f"matrix not PSD (min eigenvalue {vals.min():.3e})")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T, vals


def fid_from_moments(mu_a, cov_a, mu_b, cov_b):
    """||mu_a - mu_b||^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^(1/2)).

    The cross term is computed as the trace of the symmetric root of
    sqrt(cov_a) cov_b sqrt(cov_a), which has the same eigenvalues.
    """
    mu_a, mu_b = np.atleast_1d(mu_a).astype(np.float64), np.atleast_1d(mu_b).astype(np.float64)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(np.float64), np.atleast_2d(cov_b).astype(np.float64)
    root_a, _ = _sqrt_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    if vals.min() < -EIG_TOL:
        raise np.linalg.LinAlgError(f"covariance product not PSD (min eigenvalue {vals.min():.3e})")
    tr_cross = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_cross)


def fid(feats_a, feats_b):
    a, b = np.asarray(feats_a, dtype=np.float64), np.asarray(feats_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) < 2 or len(b) < 2:
        raise ValueError("FID needs at least 2 feature vectors per set")
    return fid_from_moments(a.mean(0), np.cov(a, rowvar=False), b.mean(0), np.cov(b, rowvar=False))


class FeatureEmbedder:
    """Global-average-pooled multi-layer features of a frozen extractor."""

    def __init__(self, extractor=None):
        self.extractor = extractor or RandomFeatures(seed=1234)

    @torch.no_grad()
    def __call__(self, img):
        x = torch.from_numpy(as_unit(img)).float()
        if x.ndim == 2:
            x = x[..., None].expand(-1, -1, 3)
        x = x.permute(2, 0, 1)[None] * 2.0 - 1.0
        return torch.cat([f.mean(dim=(2, 3)) for f in self.extractor(x)], dim=1)[0].numpy()


def evaluate_pairs(preds, gts, embed=None):
    """Per-pair SSIM/PSNR averaged over pairs, plus set-level FID."""
    if len(preds) != len(gts) or not preds:
        raise ValueError("need equally many (>=1) predictions and ground truths")
    embed = embed or FeatureEmbedder()
    ssims = [ssim(p, g) for p, g in zip(preds, gts)]
    psnrs = [psnr(p, g) for p, g in zip(preds, gts)]
    finite = [v for v in psnrs if math.isfinite(v)]
    # identical pairs carry no finite PSNR; the average is over the rest
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    fid_val = math.nan
    if len(preds) >= 2:
        fid_val = fid(np.stack([embed(p) for p in preds]), np.stack([embed(g) for g in gts]))
    return MetricsReport(fid=fid_val, ssim=float(np.mean(ssims)), psnr=mean_psnr, n_pairs=len(preds))
