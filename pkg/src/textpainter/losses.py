"""Reconstruction, perceptual, and adversarial losses with the epoch schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F


@dataclass
class LossReport:
    rec: float
    per: float
    adv_g: float
    adv_d: float
    lambda1: float
    lambda2: float
    lambda3: float
    total_g: float

    def as_dict(self):
        return dict(self.__dict__)


def schedule(n, r=0.85):
    """(lambda1, lambda3) = (r**n, 1 - r**n) for epoch n."""
    if n < 0:
        raise ValueError("epoch index must be >= 0")
    lam1 = r ** n
    return lam1, 1.0 - lam1


def total_generator_loss(rec, per, adv, n, r=0.85, lambda2=1.0):
    lam1, lam3 = schedule(n, r)
    return lam1 * rec + lambda2 * per + lam3 * adv


def _region(offsets, sizes, i):
    (oy, ox), (h, w) = offsets[i], sizes[i]
    return slice(oy, oy + h), slice(ox, ox + w)


def rec_loss(out, target, true_sizes=None, offsets=None):
    """L1 over each item's true bbox, divided by its pixel count h*w.

    Per-channel means are averaged over channels and batch.  Without
    sizes/offsets the whole image is the region.
    """
    if out.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(out.shape)} vs {tuple(target.shape)}")
    if true_sizes is None:
        return (out - target).abs().mean()
    if offsets is None:
        offsets = [((out.shape[-2] - h) // 2, (out.shape[-1] - w) // 2) for h, w in true_sizes]
    terms = []
    for i in range(out.shape[0]):
        ys, xs = _region(offsets, true_sizes, i)
        h, w = true_sizes[i]
        terms.append((out[i, :, ys, xs] - target[i, :, ys, xs]).abs().sum(dim=(1, 2)).mean() / (h * w))
    return torch.stack(terms).mean()


class RandomFeatures(nn.Module):
    """Frozen random conv stack exposing several feature layers.

    Deterministic for a given seed; used as the perceptual feature extractor
    and as the FID embedding when no pretrained network is plugged in.
    """

    def __init__(self, widths=(16, 32, 64), seed=0, in_ch=3):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        layers = []
        for w in widths:
            conv = nn.Conv2d(in_ch, w, 3, 2, 1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * math.sqrt(2.0 / (in_ch * 9)))
                conv.bias.zero_()
            layers.append(conv)
            in_ch = w
        self.layers = nn.ModuleList(layers)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        feats = []
        for conv in self.layers:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats


def perceptual_loss(out, target, phi, true_sizes=None, offsets=None):
    """sum_i ||phi_i(target) - phi_i(out)||_1 / (H_i W_i C_i), averaged over items.

    With sizes given, each item is cropped to its true bbox first, so
    padding never contributes.
    """
    if true_sizes is None:
        items = [(out, target)]
    else:
        if offsets is None:
            offsets = [((out.shape[-2] - h) // 2, (out.shape[-1] - w) // 2) for h, w in true_sizes]
        items = []
        for i in range(out.shape[0]):
            ys, xs = _region(offsets, true_sizes, i)
            items.append((out[i:i + 1, :, ys, xs], target[i:i + 1, :, ys, xs]))
    total = 0.0
    for o, t in items:
        for fo, ft in zip(phi(o), phi(t)):
            m = fo.shape[1] * fo.shape[2] * fo.shape[3]
            total = total + (ft - fo).abs().sum(dim=(1, 2, 3)).mean() / m
    return total / len(items)


def adversarial_losses(d_fake, d_real=None):
    """Non-saturating logistic GAN losses from discriminator logits.

    adv_g = softplus(-D(fake)); adv_d = softplus(D(fake)) + softplus(-D(real)).
    For the discriminator update, ``d_fake`` must be D applied to the
    *detached* generated image: D still gets gradient from both terms, the
    generator gets none.
    """
    adv_g = F.softplus(-d_fake).mean()
    if d_real is None:
        return adv_g, None
    adv_d = F.softplus(d_fake).mean() + F.softplus(-d_real).mean()
    return adv_g, adv_d


def paste_region(out, context, true_sizes, offsets):
    """Generated pixels inside each bbox, ``context`` pixels outside."""
    mask = torch.zeros_like(out[:, :1])
    for i in range(out.shape[0]):
        ys, xs = _region(offsets, true_sizes, i)
        mask[i, :, ys, xs] = 1.0
    return mask * out + (1 - mask) * context
