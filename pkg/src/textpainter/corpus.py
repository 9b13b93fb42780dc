"""Poster corpus: synthesis, filtering, contextual-padding batches, and I/O.

The synthetic posters stand in for a real e-commerce corpus.  Each poster has
a procedurally drawn background whose dominant hue fixes the text color
(complementary hue, or white on dark posters), so the correct answer is known
exactly.  About half of the posters carry one highlighted keyword drawn in a
second, accent color.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .color import PALETTE26, WHITE, hsv_to_rgb8
from .glyph import FILL_H, FILL_W, natural_aspect, render_glyph

PLAIN_WORDS = (
    "tea", "cake", "coat", "shoe", "milk", "fruit", "style", "fresh", "gift",
    "home", "cozy", "daily", "shop", "deal", "mood", "wear", "juice", "lamp",
)
KEYWORDS = ("SALE", "HOT", "FREE", "NEW", "50%", "BIG", "TOP", "$9")

# Removal rules applied by filter_corpus.
MAX_ASPECT = 11
HEIGHT_RANGE = (30, 100)
WIDTH_RANGE = (50, 450)
LENGTH_RANGE = (1, 11)
MAX_TEXTS = 5


@dataclass
class CorpusConfig:
    poster_h: int = 750
    poster_w: int = 513
    max_texts: int = 5
    text_h: tuple = (30, 80)
    keyword_prob: float = 0.5
    dark_prob: float = 0.2

    def validate(self):
        if self.poster_h <= 0 or self.poster_w <= 0:
            raise ValueError("poster size must be positive")
        if self.max_texts < 1:
            raise ValueError("max_texts must be >= 1")
        lo, hi = self.text_h
        if lo <= 0 or hi < lo or hi > self.poster_h:
            raise ValueError(f"invalid text height range {self.text_h}")
        if self.poster_w < WIDTH_RANGE[0]:
            raise ValueError("poster narrower than the minimum text width")


@dataclass(eq=False)
class TextElement:
    content: str
    bbox: tuple  # (x, y, w, h) in pixels
    gt_text_image: np.ndarray | None = None  # (h, w, 3) uint8 crop of the poster
    color: tuple | None = None  # main text color, when known
    keyword: tuple | None = None  # (start, stop) character span of the highlighted keyword
    keyword_color: tuple | None = None

    @property
    def size(self):
        return self.bbox[3], self.bbox[2]


@dataclass(eq=False)
class PosterSample:
    background: np.ndarray  # (H, W, 3) uint8, text-free
    elements: list
    source_id: str
    poster: np.ndarray | None = None  # composited poster, when available

    def element_id(self, i):
        return f"{self.source_id}_{i}"


# ----------------------------------------------------------------------------
# synthesis


def _draw_background(rng, cfg, hue_idx, dark):
    H, W = cfg.poster_h, cfg.poster_w
    hue = hue_idx / 24.0
    sat = rng.uniform(0.35, 0.7)
    if dark:
        v_top, v_bot = rng.uniform(0.15, 0.3, size=2)
    else:
        v_top, v_bot = rng.uniform(0.55, 0.95, size=2)
    t = np.linspace(0.0, 1.0, H)[:, None, None]
    img = (1 - t) * hsv_to_rgb8(hue, sat, v_top) + t * hsv_to_rgb8(hue, sat, v_bot)
    img = np.broadcast_to(img, (H, W, 3)).copy()

    yy, xx = np.mgrid[0:H, 0:W]
    for _ in range(rng.integers(2, 5)):
        shade = hsv_to_rgb8(hue + rng.choice([-1, 0, 1]) / 24.0,
                            np.clip(sat + rng.uniform(-0.2, 0.2), 0.1, 0.9),
                            np.clip((v_top + v_bot) / 2 + rng.uniform(-0.15, 0.15), 0.05, 1.0))
        cy, cx = rng.integers(0, H), rng.integers(0, W)
        if rng.random() < 0.5:
            r = rng.integers(40, 160)
            m = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            hh, ww = rng.integers(40, 250, size=2)
            m = (abs(yy - cy) < hh // 2) & (abs(xx - cx) < ww // 2)
        img[m] = shade
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def _pick_content(rng, with_keyword):
    while True:
        words = [PLAIN_WORDS[i] for i in rng.choice(len(PLAIN_WORDS), size=rng.integers(1, 3), replace=False)]
        span = None
        if with_keyword:
            kw = KEYWORDS[rng.integers(len(KEYWORDS))]
            pos = int(rng.integers(0, len(words) + 1))
            words.insert(pos, kw)
            start = sum(len(wd) + 1 for wd in words[:pos])
            span = (start, start + len(kw))
        text = " ".join(words)
        if len(text) <= LENGTH_RANGE[1]:
            return text, span


def _size_for(rng, content, cfg):
    h = int(rng.integers(cfg.text_h[0], cfg.text_h[1] + 1))
    aspect = natural_aspect(content)
    w = int(np.ceil(h * FILL_H * aspect / FILL_W)) + 6
    if w > WIDTH_RANGE[1]:
        h = max(int(h * WIDTH_RANGE[1] / w), HEIGHT_RANGE[0])
        w = WIDTH_RANGE[1]
    w = int(np.clip(w, WIDTH_RANGE[0], min(MAX_ASPECT * h, cfg.poster_w)))
    return w, h


def _overlaps(box, boxes, gap=4):
    x, y, w, h = box
    for bx, by, bw, bh in boxes:
        if x < bx + bw + gap and bx < x + w + gap and y < by + bh + gap and by < y + h + gap:
            return True
    return False


def synth_poster(seed, index, cfg=None):
    cfg = cfg or CorpusConfig()
    cfg.validate()
    rng = np.random.default_rng([seed, index])
    hue_idx = int(rng.integers(24))
    dark = rng.random() < cfg.dark_prob
    background = _draw_background(rng, cfg, hue_idx, dark)

    main_idx = WHITE if dark else (hue_idx + 12) % 24
    kw_idx = (hue_idx + 12) % 24 if dark else (main_idx + 6) % 24
    main, accent = PALETTE26[main_idx], PALETTE26[kw_idx]

    n_texts = int(rng.integers(1, cfg.max_texts + 1))
    kw_slot = int(rng.integers(n_texts)) if rng.random() < cfg.keyword_prob else -1

    poster = background.astype(np.float64)
    elements, boxes = [], []
    for i in range(n_texts):
        content, span = _pick_content(rng, i == kw_slot)
        w, h = _size_for(rng, content, cfg)
        for _ in range(60):
            box = (int(rng.integers(0, cfg.poster_w - w + 1)), int(rng.integers(0, cfg.poster_h - h + 1)), w, h)
            if not _overlaps(box, boxes):
                break
        else:
            continue
        boxes.append(box)
        x, y = box[0], box[1]
        glyph = render_glyph(content, (h, w))
        color = np.empty((h, w, 3))
        color[:] = main
        if span is not None:
            color[_span_columns(glyph, span)] = accent
        alpha = glyph.pixels[..., None].astype(np.float64)
        region = poster[y:y + h, x:x + w]
        poster[y:y + h, x:x + w] = region * (1 - alpha) + color * alpha
        elements.append(TextElement(
            content=content, bbox=box, color=main,
            keyword=span, keyword_color=accent if span else None,
        ))

    poster = np.clip(np.round(poster), 0, 255).astype(np.uint8)
    for el in elements:
        x, y, w, h = el.bbox
        el.gt_text_image = poster[y:y + h, x:x + w].copy()
    return PosterSample(background=background, elements=elements,
                        source_id=f"s{seed}_{index:05d}", poster=poster)


def _span_columns(glyph, span):
    cols = np.zeros(glyph.pixels.shape[1], dtype=bool)
    for x0, x1 in glyph.char_spans[span[0]:span[1]]:
        cols[max(int(np.floor(x0)), 0):int(np.ceil(x1))] = True
    return np.broadcast_to(cols[None, :], glyph.pixels.shape)


def synth_corpus(seed, n_posters, cfg=None):
    if n_posters < 1:
        raise ValueError("n_posters must be >= 1")
    cfg = cfg or CorpusConfig()
    cfg.validate()
    return [synth_poster(seed, i, cfg) for i in range(n_posters)]


def keyword_mask(element, size=None):
    """Ink pixels of the highlighted keyword inside the element's bbox."""
    h, w = size or element.size
    if element.keyword is None:
        return np.zeros((h, w), dtype=bool)
    return render_glyph(element.content, (h, w)).char_mask(*element.keyword)


# ----------------------------------------------------------------------------
# filtering


def keep_element(el):
    x, y, w, h = el.bbox
    return (
        w / h <= MAX_ASPECT
        and HEIGHT_RANGE[0] <= h <= HEIGHT_RANGE[1]
        and WIDTH_RANGE[0] <= w <= WIDTH_RANGE[1]
        and LENGTH_RANGE[0] <= len(el.content) <= LENGTH_RANGE[1]
    )


def filter_corpus(samples):
    """Drop out-of-range text elements, then posters left with 0 or >5 texts."""
    out = []
    for s in samples:
        kept = [el for el in s.elements if keep_element(el)]
        if 1 <= len(kept) <= MAX_TEXTS:
            out.append(PosterSample(background=s.background, elements=kept,
                                    source_id=s.source_id, poster=s.poster))
    return out


# ----------------------------------------------------------------------------
# batching


def round_up(n, align):
    return -(-n // align) * align


def to_unit(img):
    """uint8 HWC -> float CHW in [-1, 1]."""
    return torch.from_numpy(np.ascontiguousarray(img)).permute(2, 0, 1).float() / 127.5 - 1.0


def to_uint8(t):
    """float CHW in [-1, 1] -> uint8 HWC."""
    arr = ((t.detach().float().clamp(-1, 1) + 1.0) * 127.5).round()
    return arr.permute(1, 2, 0).cpu().numpy().astype(np.uint8)


def padded_crop(img, bbox, out_h, out_w):
    """(out_h, out_w) window centred on bbox; out-of-image rows/cols repeat the edge."""
    x, y, w, h = bbox
    top = y - (out_h - h) // 2
    left = x - (out_w - w) // 2
    ys = np.clip(np.arange(top, top + out_h), 0, img.shape[0] - 1)
    xs = np.clip(np.arange(left, left + out_w), 0, img.shape[1] - 1)
    return img[ys[:, None], xs[None, :]]


@dataclass
class GenBatch:
    glyph: torch.Tensor  # (B, 1, H, W) coverage in [0, 1]
    local_bg: torch.Tensor  # (B, 3, H, W) in [-1, 1]
    gt: torch.Tensor  # (B, 3, H, W) in [-1, 1]
    pos_mask: torch.Tensor  # (B, 1, Hp, Wp)
    backgrounds: torch.Tensor  # (B, 3, Hp, Wp) in [-1, 1]
    true_sizes: list  # [(h, w)]
    offsets: list  # [(top, left)] of the bbox inside the padded crop
    contents: list
    ids: list = field(default_factory=list)
    keyword_mask: torch.Tensor | None = None  # (B, 1, H, W) bool

    def __len__(self):
        return self.glyph.shape[0]

    @property
    def region_mask(self):
        """(B, 1, H, W) float mask of each item's true bbox."""
        B, _, H, W = self.glyph.shape
        m = torch.zeros(B, 1, H, W)
        for i, ((h, w), (oy, ox)) in enumerate(zip(self.true_sizes, self.offsets)):
            m[i, :, oy:oy + h, ox:ox + w] = 1.0
        return m


def make_batch(items, align=32, font_path=None):
    """Pad (sample, element) pairs to a shared aligned size using surrounding poster pixels."""
    if not items:
        raise ValueError("empty batch")
    for s, el in items:
        x, y, w, h = el.bbox
        Hp, Wp = s.background.shape[:2]
        if w > Wp or h > Hp:
            raise ValueError(f"bbox {el.bbox} larger than poster {(Wp, Hp)}")
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > Wp or y + h > Hp:
            raise ValueError(f"bbox {el.bbox} not inside poster {(Wp, Hp)}")

    H = round_up(max(el.bbox[3] for _, el in items), align)
    W = round_up(max(el.bbox[2] for _, el in items), align)

    glyphs, lbs, gts, masks, bgs, kws = [], [], [], [], [], []
    sizes, offsets = [], []
    for s, el in items:
        x, y, w, h = el.bbox
        oy, ox = (H - h) // 2, (W - w) // 2
        g = np.zeros((H, W), dtype=np.float32)
        kw = np.zeros((H, W), dtype=bool)
        glyph = render_glyph(el.content, (h, w), font_path)
        g[oy:oy + h, ox:ox + w] = glyph.pixels
        if el.keyword is not None:
            kw[oy:oy + h, ox:ox + w] = glyph.char_mask(*el.keyword)
        poster = s.poster if s.poster is not None else s.background
        m = np.zeros(s.background.shape[:2], dtype=np.float32)
        m[y:y + h, x:x + w] = 1.0

        glyphs.append(torch.from_numpy(g)[None])
        kws.append(torch.from_numpy(kw)[None])
        lbs.append(to_unit(padded_crop(s.background, el.bbox, H, W)))
        gts.append(to_unit(padded_crop(poster, el.bbox, H, W)))
        masks.append(torch.from_numpy(m)[None])
        bgs.append(to_unit(s.background))
        sizes.append((h, w))
        offsets.append((oy, ox))

    return GenBatch(
        glyph=torch.stack(glyphs), local_bg=torch.stack(lbs), gt=torch.stack(gts),
        pos_mask=torch.stack(masks), backgrounds=torch.stack(bgs),
        true_sizes=sizes, offsets=offsets, contents=[el.content for _, el in items],
        ids=[_element_id(s, el) for s, el in items],
        keyword_mask=torch.stack(kws),
    )


def _element_id(sample, element):
    for i, el in enumerate(sample.elements):
        if el is element:
            return sample.element_id(i)
    return sample.source_id


def all_elements(samples):
    return [(s, el) for s in samples for el in s.elements]


# ----------------------------------------------------------------------------
# annotation / corpus I/O


def dump_json(obj):
    """Canonical JSON text: sorted keys, 2-space indent, UTF-8, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def annotation_of(sample, background_path, poster_path=None):
    ann = {
        "background": background_path,
        "elements": [{"text": el.content, "bbox": [int(v) for v in el.bbox]} for el in sample.elements],
    }
    if poster_path is not None:
        ann["poster"] = poster_path
    return ann


def write_annotation(ann, path):
    Path(path).write_text(dump_json(ann), encoding="utf-8")


def read_annotation(path):
    ann = json.loads(Path(path).read_text(encoding="utf-8"))
    if "background" not in ann or "elements" not in ann:
        raise ValueError(f"{path}: annotation needs 'background' and 'elements'")
    for el in ann["elements"]:
        if len(el["bbox"]) != 4:
            raise ValueError(f"{path}: bbox must be [x, y, w, h]")
    return ann


def load_png(path):
    return np.array(Image.open(path).convert("RGB"))


def save_png(img, path):
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_corpus(samples, out_dir, cfg=None, seed=None):
    """Write ``images/``, ``annotations/`` and ``meta.json`` under out_dir."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    meta = {"config": asdict(cfg) if cfg else None, "seed": seed, "posters": {}}
    for s in samples:
        bg_rel = f"images/{s.source_id}_bg.png"
        save_png(s.background, out / bg_rel)
        poster_rel = None
        if s.poster is not None:
            poster_rel = f"images/{s.source_id}.png"
            save_png(s.poster, out / poster_rel)
        write_annotation(annotation_of(s, bg_rel, poster_rel), out / "annotations" / f"{s.source_id}.json")
        meta["posters"][s.source_id] = [
            {
                "color": list(el.color) if el.color else None,
                "keyword": list(el.keyword) if el.keyword else None,
                "keyword_color": list(el.keyword_color) if el.keyword_color else None,
            }
            for el in s.elements
        ]
    (out / "meta.json").write_text(dump_json(meta), encoding="utf-8")
    return out


def sample_from_annotation(ann, root, source_id, meta=None):
    root = Path(root)
    background = load_png(root / ann["background"])
    poster = load_png(root / ann["poster"]) if ann.get("poster") else None
    elements = []
    for i, e in enumerate(ann["elements"]):
        x, y, w, h = (int(v) for v in e["bbox"])
        m = meta[i] if meta else {}
        elements.append(TextElement(
            content=e["text"], bbox=(x, y, w, h),
            gt_text_image=poster[y:y + h, x:x + w].copy() if poster is not None else None,
            color=tuple(m["color"]) if m.get("color") else None,
            keyword=tuple(m["keyword"]) if m.get("keyword") else None,
            keyword_color=tuple(m["keyword_color"]) if m.get("keyword_color") else None,
        ))
    return PosterSample(background=background, elements=elements, source_id=source_id, poster=poster)


def read_corpus(root):
    root = Path(root)
    meta_path = root / "meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {"posters": {}}
    samples = []
    for p in sorted(os.listdir(root / "annotations")):
        if not p.endswith(".json"):
            continue
        sid = p[:-5]
        ann = read_annotation(root / "annotations" / p)
        samples.append(sample_from_annotation(ann, root, sid, meta["posters"].get(sid)))
    return samples
