"""
Single-color baselines
======================

Theme-color contrast, histogram retrieval and a small palette classifier,
each predicting one text color that is then painted onto the glyph.
"""

import numpy as np

from textpainter.baselines import (
    RetrievalIndex, contrast_baseline, fit_classifier, local_crop, render_element,
    retrieve_color, classify_color, text_color_label, theme_colors_mmcq,
)
from textpainter.corpus import CorpusConfig, all_elements, synth_corpus
from textpainter.metrics import ssim

small = CorpusConfig(poster_h=256, poster_w=192, text_h=(30, 60))
fit_set, test_set = synth_corpus(10, 80, small), synth_corpus(11, 6, small)

s = test_set[0]
print("poster theme colors:", theme_colors_mmcq(s.background, 5))

index = RetrievalIndex.build(fit_set)
model = fit_classifier(fit_set, epochs=15)

scores = {"contrast": [], "retrieve": [], "classify": []}
for s, el in all_elements(test_set):
    lb = local_crop(s, el)
    preds = {
        "contrast": contrast_baseline(s.background, lb),
        "retrieve": retrieve_color(s.background, lb, index),
        "classify": classify_color(s.background, el.bbox, lb, model),
    }
    for name, rgb in preds.items():
        scores[name].append(ssim(render_element(s, el, rgb), el.gt_text_image))
    print(f"{el.content!r:>14} truth {text_color_label(el)}  " + "  ".join(f"{k} {v}" for k, v in preds.items()))

for name, vals in scores.items():
    print(f"{name:>9}: mean in-bbox SSIM {np.mean(vals):.3f}")
