"""Single-color baselines: palette classification, theme-color contrast, histogram retrieval.

Each baseline predicts one RGB text color from the poster background and the
local background under the bbox; :func:`render_baseline` then paints the
glyph with that color for metric comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .color import PALETTE26, contrast_ratio, nearest_palette_index
from .corpus import all_elements
from .glyph import render_glyph

HIST_BINS = 128


@dataclass
class Palette:
    colors: tuple

    def __post_init__(self):
        self.colors = tuple(tuple(int(v) for v in c) for c in self.colors)
        if len(set(self.colors)) != len(self.colors):
            raise ValueError("palette entries must be distinct")

    @property
    def size(self):
        return len(self.colors)

    def index(self, rgb):
        return nearest_palette_index(rgb, self.colors)


WEBFONT26 = Palette(PALETTE26)


def local_crop(sample, element):
    x, y, w, h = element.bbox
    return sample.background[y:y + h, x:x + w]


def text_color_label(element):
    """Median RGB over the fully-inked pixels of the ground-truth crop."""
    glyph = render_glyph(element.content, element.size)
    mask = glyph.solid_mask
    if not mask.any():
        mask = glyph.ink_mask
    px = element.gt_text_image[mask]
    return tuple(int(v) for v in np.round(np.median(px, axis=0)))


# ----------------------------------------------------------------------------
# modified median cut quantization


class _Box:
    __slots__ = ("colors", "counts")

    def __init__(self, colors, counts):
        self.colors, self.counts = colors, counts

    @property
    def population(self):
        return int(self.counts.sum())

    @property
    def volume(self):
        return int(np.prod(self.colors.max(0) - self.colors.min(0) + 1))

    @property
    def splittable(self):
        return len(self.colors) > 1

    def mean(self):
        m = (self.colors * self.counts[:, None]).sum(0) / self.counts.sum()
        return tuple(int(v) for v in np.round(m))

    def split(self):
        rng = self.colors.max(0) - self.colors.min(0)
        axis = int(np.argmax(rng))  # first axis wins ties (R, G, B)
        order = np.argsort(self.colors[:, axis], kind="stable")
        vals = self.colors[order, axis]
        cum = np.cumsum(self.counts[order])
        cut_val = vals[np.searchsorted(cum, cum[-1] / 2.0)]
        left = self.colors[:, axis] <= cut_val
        if left.all():
            left = self.colors[:, axis] < cut_val
        return _Box(self.colors[left], self.counts[left]), _Box(self.colors[~left], self.counts[~left])


def theme_colors_mmcq(img, k, pop_fraction=0.75):
    """k representative colors by modified median cut.

    Boxes are split at the population median of their longest color axis.
    The first ``pop_fraction`` of splits pick the most populous box, the rest
    pick by population x volume.  Box colors are population-weighted means of
    the original pixels; results are ordered by population, then RGB.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    colors, counts = np.unique(np.asarray(img, dtype=np.int64).reshape(-1, 3), axis=0, return_counts=True)
    if k >= len(colors):
        order = sorted(range(len(colors)), key=lambda i: (-counts[i], tuple(colors[i])))
        return [tuple(int(v) for v in colors[i]) for i in order]

    boxes = [_Box(colors, counts)]
    while len(boxes) < k:
        candidates = [i for i, b in enumerate(boxes) if b.splittable]
        if not candidates:
            break
        by_volume = len(boxes) >= pop_fraction * k
        key = (lambda b: b.population * b.volume) if by_volume else (lambda b: b.population)
        i = max(candidates, key=lambda j: (key(boxes[j]), -j))
        boxes[i:i + 1] = boxes[i].split()
    ranked = sorted(boxes, key=lambda b: (-b.population, b.mean()))
    return [b.mean() for b in ranked]


def contrast_pick(global_themes, local_theme, metric=contrast_ratio):
    """Global theme color with the highest contrast against the local theme.

    Ties: larger RGB distance from the local theme, then smaller RGB triple.
    """
    local = np.asarray(local_theme, dtype=np.float64)

    def key(c):
        c = tuple(int(v) for v in c)
        dist = float(np.linalg.norm(np.asarray(c, dtype=np.float64) - local))
        return (float(metric(c, local_theme)), dist, tuple(-v for v in c))

    return tuple(int(v) for v in max(global_themes, key=key))


def contrast_baseline(background, local_bg, n_global=5):
    themes = theme_colors_mmcq(background, n_global)
    local = theme_colors_mmcq(local_bg, 1)[0]
    return contrast_pick(themes, local)


# ----------------------------------------------------------------------------
# retrieval


def channel_hist(img, bins=HIST_BINS):
    """Per-channel L1-normalized histograms, concatenated (3 * bins,)."""
    px = np.asarray(img, dtype=np.int64).reshape(-1, 3)
    idx = px * bins // 256
    out = [np.bincount(idx[:, c], minlength=bins) / len(px) for c in range(3)]
    return np.concatenate(out)


def retrieval_feature(background, local_bg):
    return np.concatenate([channel_hist(background), channel_hist(local_bg)])


@dataclass
class RetrievalIndex:
    features: np.ndarray  # (n, 768)
    labels: list

    @classmethod
    def build(cls, samples):
        feats, labels = [], []
        for s, el in all_elements(samples):
            feats.append(retrieval_feature(s.background, local_crop(s, el)))
            labels.append(text_color_label(el))
        return cls(np.stack(feats) if feats else np.zeros((0, 6 * HIST_BINS)), labels)

    def query(self, feature):
        if len(self.labels) == 0:
            raise ValueError("retrieval index is empty")
        d = np.sum((self.features - feature[None]) ** 2, axis=1)
        return self.labels[int(np.argmin(d))]


def retrieve_color(background, local_bg, index):
    return index.query(retrieval_feature(background, local_bg))


# ----------------------------------------------------------------------------
# classification


class UntrainedModelError(RuntimeError):
    pass


def _encoder(in_ch, width):
    return nn.Sequential(
        nn.Conv2d(in_ch, width, 3, 2, 1), nn.LeakyReLU(0.2),
        nn.Conv2d(width, 2 * width, 3, 2, 1), nn.LeakyReLU(0.2),
        nn.Conv2d(2 * width, 4 * width, 3, 2, 1), nn.LeakyReLU(0.2),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )


class ColorClassifier(nn.Module):
    """Global (poster + position mask) and local encoders, fused into a 26-way head."""

    global_size = (96, 64)
    local_size = (32, 96)

    def __init__(self, palette=WEBFONT26, width=16):
        super().__init__()
        self.palette = palette
        self.global_enc = _encoder(4, width)
        self.local_enc = _encoder(3, width)
        self.head = nn.Linear(8 * width, palette.size)
        self.trained = False

    def inputs(self, background, bbox, local_bg):
        H, W = background.shape[:2]
        x, y, w, h = bbox
        mask = np.zeros((H, W, 1), dtype=np.float32)
        mask[y:y + h, x:x + w] = 1.0
        g = np.concatenate([background.astype(np.float32) / 127.5 - 1.0, mask], axis=2)
        g = F.adaptive_avg_pool2d(torch.from_numpy(g).permute(2, 0, 1)[None], self.global_size)
        loc = torch.from_numpy(local_bg.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1)[None]
        loc = F.adaptive_avg_pool2d(loc, self.local_size)
        return g, loc

    def forward(self, g, loc):
        return self.head(torch.cat([self.global_enc(g), self.local_enc(loc)], dim=1))

    @torch.no_grad()
    def predict_index(self, background, bbox, local_bg):
        if not self.trained:
            raise UntrainedModelError("color classifier has not been trained")
        self.eval()
        return int(self(*self.inputs(background, bbox, local_bg)).argmax(1))


def fit_classifier(samples, epochs=30, lr=2e-3, batch_size=32, seed=0, palette=WEBFONT26):
    torch.manual_seed(seed)
    model = ColorClassifier(palette)
    gs, ls, ys = [], [], []
    for s, el in all_elements(samples):
        g, loc = model.inputs(s.background, el.bbox, local_crop(s, el))
        gs.append(g)
        ls.append(loc)
        ys.append(palette.index(text_color_label(el)))
    G, L, Y = torch.cat(gs), torch.cat(ls), torch.tensor(ys)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    model.train()
    for _ in range(epochs):
        order = torch.from_numpy(rng.permutation(len(Y)))
        for i in range(0, len(Y), batch_size):
            idx = order[i:i + batch_size]
            loss = F.cross_entropy(model(G[idx], L[idx]), Y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    model.trained = True
    return model.eval()


def classify_color(background, bbox, local_bg, model):
    return model.palette.colors[model.predict_index(background, bbox, local_bg)]


# ----------------------------------------------------------------------------
# rendering / batch prediction


def render_baseline(coverage, local_bg, color):
    """Alpha-composite a flat color over the local background, alpha = glyph coverage."""
    a = np.asarray(coverage, dtype=np.float64)[..., None]
    out = np.asarray(color, dtype=np.float64) * a + np.asarray(local_bg, dtype=np.float64) * (1 - a)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def render_element(sample, element, color):
    glyph = render_glyph(element.content, element.size)
    return render_baseline(glyph.pixels, local_crop(sample, element), color)


def predict_colors(method, samples, fit_samples=None, seed=0):
    """[(element_id, rgb)] for every element of ``samples``."""
    fit_samples = samples if fit_samples is None else fit_samples
    if method == "contrast":
        fn = lambda s, el: contrast_baseline(s.background, local_crop(s, el))  # noqa: E731
    elif method == "retrieve":
        index = RetrievalIndex.build(fit_samples)
        fn = lambda s, el: retrieve_color(s.background, local_crop(s, el), index)  # noqa: E731
    elif method == "classify":
        model = fit_classifier(fit_samples, seed=seed)
        fn = lambda s, el: classify_color(s.background, el.bbox, local_crop(s, el), model)  # noqa: E731
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    out = []
    for s in samples:
        for i, el in enumerate(s.elements):
            out.append((s.element_id(i), tuple(int(v) for v in fn(s, el))))
    return out
