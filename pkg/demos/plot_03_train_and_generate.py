"""
Training a small generator and compositing
==========================================

A few epochs of the alternating generator/discriminator loop on a tiny
corpus, then generation of text images pasted back onto a poster.  This is
far too short to look good; it shows the moving parts.
"""

import sys
import time
from pathlib import Path

import torch

from textpainter.corpus import CorpusConfig, save_png, synth_corpus
from textpainter.losses import schedule
from textpainter.net import GenConfig
from textpainter.train import TrainConfig, Trainer, composite, evaluate_generator, generate_crops

torch.set_num_threads(1)
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "train"
out.mkdir(parents=True, exist_ok=True)

small = CorpusConfig(poster_h=256, poster_w=192, text_h=(30, 60))
train, held_out = synth_corpus(5, 24, small), synth_corpus(6, 4, small)

###############################################################################
# The reconstruction weight decays as r**epoch and hands over to the
# adversarial term.
print("schedule:", [tuple(round(v, 3) for v in schedule(n)) for n in range(4)])

cfg = TrainConfig(epochs=10, batch_size=8, seed=0, out_dir=str(out), model=GenConfig.toy(base_channels=64))
trainer = Trainer(cfg)
print("untrained:", evaluate_generator(trainer.model, trainer.text_encoder, held_out))

t0 = time.time()
for rep in trainer.fit(train):
    print(f"rec {rep.rec:.3f}  per {rep.per:.3f}  adv_g {rep.adv_g:.3f}  adv_d {rep.adv_d:.3f}  lambda1 {rep.lambda1:.3f}")
print(f"trained in {time.time() - t0:.0f}s:", evaluate_generator(trainer.model, trainer.text_encoder, held_out))

###############################################################################
# Generate every element of a held-out poster and paste the crops back.
s = held_out[0]
crops = generate_crops(trainer.model, trainer.text_encoder, s)
save_png(composite(s.background, crops, [el.bbox for el in s.elements]), out / "composite.png")
save_png(s.poster, out / "ground_truth.png")
print("checkpoint + log in", out)
