"""
Synthetic posters and contextual padding
========================================

Build a handful of toy posters, filter them, write them to disk, and batch
text elements of different sizes with background-aware padding.
"""

import sys
from pathlib import Path

import numpy as np

from textpainter.corpus import (
    all_elements, filter_corpus, make_batch, read_corpus, save_png, synth_corpus, to_uint8,
    write_corpus,
)
from textpainter.glyph import render_glyph

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "corpus"

###############################################################################
# Every poster is a gradient background with a few shapes, plus 1-5 text
# lines drawn in a palette color.  One line may carry an accented keyword.
samples = filter_corpus(synth_corpus(seed=1, n_posters=4))
for s in samples:
    print(s.source_id, [(el.content, el.bbox) for el in s.elements])

write_corpus(samples, out, seed=1)
print("wrote", len(list((out / "annotations").glob("*.json"))), "annotations to", out)
assert len(read_corpus(out)) == len(samples)

###############################################################################
# Glyph images are coverage rasters in [0, 1], centred in the box.
g = render_glyph("tea SALE", (40, 200))
print("glyph", g.pixels.shape, "ink pixels", int(g.ink_mask.sum()))

###############################################################################
# Batching: every item is padded to the same multiple-of-32 size, and the
# padding is real poster background around the box, not a constant.
items = all_elements(samples)[:3]
batch = make_batch(items)
print("batch glyph", tuple(batch.glyph.shape), "true sizes", batch.true_sizes)
for i, (s, el) in enumerate(items):
    x, y, w, h = el.bbox
    oy, ox = batch.offsets[i]
    inside = to_uint8(batch.gt[i])[oy:oy + h, ox:ox + w]
    assert np.array_equal(inside, s.poster[y:y + h, x:x + w])
    save_png(to_uint8(batch.local_bg[i]), out / f"padded_local_bg_{i}.png")
