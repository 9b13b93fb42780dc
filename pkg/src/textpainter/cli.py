"""Command line entry point: ``textpainter <verb> ...``.

Failures print one JSON line ``{"error": ..., "message": ...}`` to stderr and
exit with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from .corpus import (
    CorpusConfig, filter_corpus, load_png, read_annotation, read_corpus,
    sample_from_annotation, save_png, synth_corpus, write_corpus,
)

SEED_ENV = "TEXTPAINTER_SEED"

TRAIN_KEYS = """config keys (flat "section.key: value"):
  corpus.path              corpus directory written by `synth`
  train.epochs             number of epochs (default 10)
  train.batch_size         elements per batch (default 8)
  train.lr_g, train.lr_d   Adam learning rates (default 2e-4)
  train.seed               RNG seed; TEXTPAINTER_SEED overrides
  train.out_dir            checkpoint + train_log.jsonl directory
  train.checkpoint_interval  epochs between checkpoints (default 1)
  loss.r                   lambda1 = r**epoch (default 0.85)
  loss.lambda2             perceptual weight (default 1.0)
  loss.adv_variant         adversarial objective (only "nonsat")
  loss.phi_seed            seed of the frozen perceptual feature stack
  glyph.font_path          TTF/OTF used to rasterize glyphs (default bundled DejaVu Sans)
  textsem.backend          toy | external
  textsem.dim              text token width (default 64)
  textsem.vocab_seed       toy encoder hash key
  textsem.factory          module:callable for the external backend
  model.<field>            any GenConfig field, e.g. model.base_channels,
                           model.attn_blocks, model.style_dim
  model.preset             "toy" starts from the desk-scale preset
"""


def read_config(path):
    cfg = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(cfg, dict) or any(isinstance(v, dict) for v in cfg.values()):
        raise ValueError(f"{path}: config must be a flat mapping of 'section.key: value'")
    return cfg


def train_config_from_flat(flat):
    from .net import GenConfig
    from .train import TrainConfig

    flat = dict(flat)
    preset = flat.pop("model.preset", None)
    model_kw = {k[6:]: v for k, v in flat.items() if k.startswith("model.")}
    rest = {k: v for k, v in flat.items() if not k.startswith("model.")}
    cfg = TrainConfig.from_flat(rest)
    cfg.model = GenConfig.toy(**model_kw) if preset == "toy" else GenConfig(**model_kw)
    cfg.model.text_dim = cfg.text_dim
    if os.environ.get(SEED_ENV):
        cfg.seed = int(os.environ[SEED_ENV])
    return cfg


# ----------------------------------------------------------------------------
# verbs


def cmd_synth(args):
    seed = int(os.environ.get(SEED_ENV, args.seed))
    cfg = CorpusConfig()
    samples = filter_corpus(synth_corpus(seed, args.n, cfg))
    write_corpus(samples, args.out, cfg, seed)
    print(json.dumps({"posters": len(samples), "out": str(args.out)}))


def cmd_train(args):
    from .train import Trainer

    cfg = train_config_from_flat(read_config(args.config))
    if not cfg.corpus:
        raise ValueError("config key corpus.path is required")
    samples = read_corpus(cfg.corpus)
    trainer = Trainer(cfg)
    ckpt = Path(cfg.out_dir) / "checkpoint.pt" if cfg.out_dir else None
    if args.resume and ckpt and ckpt.exists():
        trainer = Trainer.load(ckpt, cfg)
    history = trainer.fit(samples)
    if ckpt:
        trainer.save(ckpt)
    last = history[-1].as_dict() if history else {}
    print(json.dumps({"epochs": trainer.state.epoch, "steps": trainer.state.step, **last}))


def cmd_generate(args):
    import torch

    from .train import Trainer, composite, generate_crops

    expected = train_config_from_flat(read_config(args.config)) if args.config else None
    trainer = Trainer.load(args.checkpoint, expected)
    torch.manual_seed(int(os.environ.get(SEED_ENV, args.seed)))
    ann = read_annotation(args.annotation)
    ann = dict(ann, background=str(Path(args.poster).resolve()))
    ann.pop("poster", None)
    sample = sample_from_annotation(ann, Path("."), Path(args.annotation).stem)
    crops = generate_crops(trainer.model, trainer.text_encoder, sample, font_path=trainer.cfg.font_path or None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, crop in enumerate(crops):
        save_png(crop, out / f"{sample.element_id(i)}.png")
    save_png(composite(sample.background, crops, [el.bbox for el in sample.elements]), out / "composite.png")
    print(json.dumps({"elements": len(crops), "out": str(out)}))


def cmd_eval(args):
    from .metrics import evaluate_pairs

    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    names = sorted(p.name for p in pred_dir.glob("*.png"))
    missing = [n for n in names if not (gt_dir / n).exists()]
    if missing:
        raise FileNotFoundError(f"no ground truth for {missing[:3]}")
    if not names:
        raise FileNotFoundError(f"no PNG files in {pred_dir}")
    report = evaluate_pairs([load_png(pred_dir / n) for n in names], [load_png(gt_dir / n) for n in names])
    Path(args.report).write_text(json.dumps(report.as_dict(), indent=2) + "\n")
    print(json.dumps(report.as_dict()))


def cmd_baseline(args):
    from .baselines import predict_colors

    samples = read_corpus(args.corpus)
    fit = read_corpus(args.fit_corpus) if args.fit_corpus else None
    preds = predict_colors(args.method, samples, fit, seed=int(os.environ.get(SEED_ENV, args.seed)))
    payload = [{"element_id": eid, "rgb": list(rgb)} for eid, rgb in preds]
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps({"method": args.method, "predictions": len(payload)}))


def cmd_composite(args):
    from .train import composite

    ann = read_annotation(args.annotation)
    background = load_png(args.background)
    crops, boxes = [], []
    stem = Path(args.annotation).stem
    for i, el in enumerate(ann["elements"]):
        x, y, w, h = (int(v) for v in el["bbox"])
        crop = load_png(Path(args.crops_dir) / f"{stem}_{i}.png")
        if crop.shape[:2] != (h, w):
            raise ValueError(f"crop {stem}_{i}.png is {crop.shape[:2]}, bbox needs {(h, w)}")
        crops.append(crop)
        boxes.append((x, y, w, h))
    save_png(composite(background, crops, boxes), args.out)
    print(json.dumps({"elements": len(crops), "out": str(args.out)}))


# ----------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="textpainter", description="Poster text image generation toolkit.")
    sub = p.add_subparsers(dest="verb", required=True, metavar="{synth,train,generate,eval,baseline,composite}")
    fmt = argparse.RawDescriptionHelpFormatter

    s = sub.add_parser("synth", help="write a synthetic poster corpus", formatter_class=fmt,
                       epilog=f"reads no config keys; {SEED_ENV} overrides --seed")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("train", help="train the generator", formatter_class=fmt, epilog=TRAIN_KEYS)
    s.add_argument("--config", required=True)
    s.add_argument("--resume", action="store_true", help="continue from train.out_dir/checkpoint.pt")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("generate", help="generate text images and a composite", formatter_class=fmt,
                       epilog="--config (optional) is checked against the checkpoint's config hash;\n" + TRAIN_KEYS)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--poster", required=True, help="text-free background PNG")
    s.add_argument("--annotation", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_generate)

    s = sub.add_parser("eval", help="SSIM/PSNR/FID over matching PNG names", formatter_class=fmt,
                       epilog="reads no config keys")
    s.add_argument("--pred-dir", required=True)
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("baseline", help="single-color baselines", formatter_class=fmt,
                       epilog=f"reads no config keys; {SEED_ENV} overrides --seed")
    s.add_argument("--method", choices=["classify", "contrast", "retrieve"], required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--fit-corpus", help="corpus used to fit classify/retrieve (default: --corpus)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_baseline)

    s = sub.add_parser("composite", help="paste text crops onto a background", formatter_class=fmt,
                       epilog="reads no config keys; crops are <annotation-stem>_<i>.png")
    s.add_argument("--background", required=True)
    s.add_argument("--annotation", required=True)
    s.add_argument("--crops-dir", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_composite)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args.fn(args)
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
