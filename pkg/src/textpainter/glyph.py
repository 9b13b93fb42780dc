"""Single-line glyph rasterization.

Text is drawn once at a large reference size, cropped to its horizontal ink
extent (vertical extent follows the font's line metrics so baselines stay put)
and then mapped into the target box with 4x supersampling.  The result is a
coverage raster in [0, 1] that seeds the generator's content path.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont

DEFAULT_FONT = Path(__file__).parent / "assets" / "DejaVuSans.ttf"

REF_SIZE = 96
SUPERSAMPLE = 4
FILL_H = 0.9
FILL_W = 0.95


@dataclass
class GlyphImage:
    pixels: np.ndarray  # (h, w) float32 coverage, 1 = ink
    char_spans: list = field(default_factory=list)  # per-character (x0, x1) in pixels
    missing: list = field(default_factory=list)

    @property
    def size(self):
        return self.pixels.shape

    @property
    def ink_mask(self):
        return self.pixels > 0.5

    @property
    def solid_mask(self):
        """Pixels fully covered by ink; their composited color is exact."""
        return self.pixels >= 1.0

    def char_mask(self, start, stop):
        """Ink pixels that belong to characters ``start:stop``."""
        cols = np.zeros(self.pixels.shape[1], dtype=bool)
        for x0, x1 in self.char_spans[start:stop]:
            cols[max(int(np.floor(x0)), 0):int(np.ceil(x1))] = True
        return self.ink_mask & cols[None, :]


@functools.lru_cache(maxsize=8)
def _load_font(font_path):
    font = ImageFont.truetype(str(font_path), REF_SIZE)
    cmap = TTFont(str(font_path), lazy=True).getBestCmap() or {}
    return font, frozenset(cmap)


def _ref_layout(content, font_path):
    font, covered = _load_font(font_path)
    ascent, descent = font.getmetrics()
    line_h = ascent + descent
    tofu_adv = 0.7 * REF_SIZE

    advances, missing = [], []
    for ch in content:
        if ord(ch) in covered:
            advances.append(font.getlength(ch))
        else:
            advances.append(tofu_adv)
            missing.append(ch)
    total = int(np.ceil(sum(advances))) + 2 * REF_SIZE // 8

    canvas = Image.new("L", (max(total, 1), line_h), 0)
    draw = ImageDraw.Draw(canvas)
    pen = REF_SIZE // 8
    spans = []
    for ch, adv in zip(content, advances):
        if ord(ch) in covered:
            draw.text((pen, 0), ch, fill=255, font=font)
        else:
            m = 0.1 * REF_SIZE
            stroke = max(int(0.06 * REF_SIZE), 1)
            draw.rectangle(
                [pen + m, ascent - 0.7 * REF_SIZE, pen + adv - m, ascent],
                outline=255, width=stroke,
            )
        spans.append((pen, pen + adv))
        pen += adv
    return canvas, spans, missing, line_h


def render_glyph(content, size, font_path=None):
    """Render ``content`` on one line into a (h, w) coverage raster.

    The text is scaled to fill the box height (or width, whichever binds
    first) and its ink is centred horizontally.  Characters missing from the
    font are drawn as tofu boxes and reported through ``warnings``.
    """
    if not content:
        raise ValueError("content must be a non-empty string")
    h, w = int(size[0]), int(size[1])
    if h <= 0 or w <= 0:
        raise ValueError(f"glyph size must be positive, got {(h, w)}")
    font_path = Path(font_path) if font_path else DEFAULT_FONT

    canvas, spans, missing, line_h = _ref_layout(content, font_path)
    if missing:
        warnings.warn(f"characters not in font, drawn as tofu: {''.join(missing)!r}")

    ink = canvas.getbbox()
    if ink is None:
        # whitespace-only strings still get a visible tofu
        return render_glyph("￿" * len(content), size, font_path)
    ink_x0, ink_x1 = ink[0], ink[2]
    ink_w = ink_x1 - ink_x0

    scale = min(FILL_H * h / line_h, FILL_W * w / ink_w)
    off_x = (w - ink_w * scale) / 2.0
    off_y = (h - line_h * scale) / 2.0

    ss = SUPERSAMPLE
    inv = 1.0 / (scale * ss)
    # output pixel centre (u+0.5)/ss maps back to reference coordinates
    big = canvas.transform(
        (w * ss, h * ss),
        Image.AFFINE,
        (inv, 0.0, ink_x0 - off_x / scale, 0.0, inv, -off_y / scale),
        resample=Image.BILINEAR,
    )
    pixels = np.asarray(big.reduce(ss), dtype=np.float32) / 255.0

    out_spans = [((x0 - ink_x0) * scale + off_x, (x1 - ink_x0) * scale + off_x) for x0, x1 in spans]
    return GlyphImage(pixels=pixels, char_spans=out_spans, missing=missing)


def natural_aspect(content, font_path=None):
    """Ink width over line height at reference size; sizes bboxes to fit text."""
    canvas, _, _, line_h = _ref_layout(content, Path(font_path) if font_path else DEFAULT_FONT)
    ink = canvas.getbbox()
    return (ink[2] - ink[0]) / line_h if ink else 0.7
