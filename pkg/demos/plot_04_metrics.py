"""
PSNR, SSIM and FID
==================

The three image-quality numbers on a few toy image pairs.
"""

import numpy as np

from textpainter.metrics import FeatureEmbedder, evaluate_pairs, fid, fid_from_moments, psnr, ssim

rng = np.random.default_rng(0)
a = rng.random((32, 48, 3)) * 0.9

print("psnr(a, a)       =", psnr(a, a))
print("psnr(a, a + 0.1) =", round(psnr(a, a + 0.1), 6), "dB")
print("ssim(a, a)       =", ssim(a, a))
print("ssim(a, noisy a) =", round(ssim(a, np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)), 4))

###############################################################################
# FID between Gaussians with known moments is the squared mean gap when the
# covariances match.
print("FID N(0,1) vs N(3,1) =", fid_from_moments(0.0, 1.0, 3.0, 1.0))
feats = rng.normal(size=(100, 8))
print("FID(A, A) =", fid(feats, feats))

###############################################################################
# On images, FID uses pooled features of a frozen random conv stack, so the
# values only compare runs of this package with each other.
imgs = [(rng.random((40, 120, 3)) * 255).astype(np.uint8) for _ in range(6)]
blurred = [((im[:, :-1].astype(float) + im[:, 1:]) / 2).astype(np.uint8) for im in imgs]
blurred = [np.concatenate([b, b[:, -1:]], axis=1) for b in blurred]
print(evaluate_pairs(blurred, imgs, FeatureEmbedder()))
