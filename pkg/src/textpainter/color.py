"""Color tables and contrast helpers shared by the corpus and the baselines."""

import colorsys

import numpy as np


def _hue_wheel(n=24, s=0.85, v=0.9):
    out = []
    for i in range(n):
        r, g, b = colorsys.hsv_to_rgb(i / n, s, v)
        out.append((round(r * 255), round(g * 255), round(b * 255)))
    return out


# 24 hue-quantized saturated colors + black + white.  The categorical
# palette the classification baseline uses; also the corpus text colors.
PALETTE26 = tuple(_hue_wheel()) + ((0, 0, 0), (255, 255, 255))
BLACK, WHITE = 24, 25


def hsv_to_rgb8(h, s, v):
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, s, v)
    return np.array([r, g, b]) * 255.0


def relative_luminance(rgb):
    """WCAG 2.x relative luminance of an 8-bit sRGB triple (or array of them)."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    lin = np.where(c <= 0.03928, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    return lin @ np.array([0.2126, 0.7152, 0.0722])


def contrast_ratio(a, b):
    la, lb = relative_luminance(a), relative_luminance(b)
    hi, lo = np.maximum(la, lb), np.minimum(la, lb)
    return (hi + 0.05) / (lo + 0.05)


def nearest_palette_index(rgb, palette=PALETTE26):
    d = np.sum((np.asarray(palette, dtype=np.float64) - np.asarray(rgb, dtype=np.float64)) ** 2, axis=1)
    return int(np.argmin(d))
