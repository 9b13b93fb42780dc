"""Alternating G/D training, checkpoints, and inference helpers."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import random
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .corpus import all_elements, make_batch, to_uint8
from .losses import (
    LossReport, RandomFeatures, adversarial_losses, paste_region, perceptual_loss, rec_loss, schedule,
)
from .net import Discriminator, GenConfig, TextPainter
from .textsem import build_encoder

log = logging.getLogger(__name__)

CKPT_MAGIC = b"TPCKPT"
CKPT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    betas: tuple = (0.0, 0.99)
    seed: int = 0
    r: float = 0.85
    lambda2: float = 1.0
    adv_variant: str = "nonsat"
    text_backend: str = "toy"
    text_dim: int = 64
    vocab_seed: int = 0
    text_factory: str = ""
    phi_seed: int = 1
    corpus: str = ""
    font_path: str = ""
    out_dir: str = ""
    checkpoint_interval: int = 1
    model: GenConfig = field(default_factory=GenConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = GenConfig(**self.model)
        self.betas = tuple(self.betas)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be > 0")
        if self.adv_variant != "nonsat":
            raise ValueError(f"unsupported loss.adv_variant {self.adv_variant!r}")
        self.model.text_dim = self.text_dim

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["betas"] = list(self.betas)
        return d

    def hash(self):
        """Identity of everything that shapes parameters and outputs."""
        key = {"model": self.model.to_dict(), "text": [self.text_backend, self.text_dim, self.vocab_seed, self.text_factory]}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]

    # flat "section.key" configs, e.g. {"loss.r": 0.85, "model.base_channels": 64}
    FLAT_KEYS = {
        "train.epochs": "epochs", "train.batch_size": "batch_size", "train.lr_g": "lr_g",
        "train.lr_d": "lr_d", "train.seed": "seed", "train.out_dir": "out_dir",
        "train.checkpoint_interval": "checkpoint_interval", "corpus.path": "corpus",
        "glyph.font_path": "font_path",
        "loss.r": "r", "loss.lambda2": "lambda2", "loss.adv_variant": "adv_variant",
        "loss.phi_seed": "phi_seed", "textsem.backend": "text_backend", "textsem.dim": "text_dim",
        "textsem.vocab_seed": "vocab_seed", "textsem.factory": "text_factory",
    }

    @classmethod
    def from_flat(cls, flat):
        kw, model = {}, {}
        model_fields = {f.name for f in fields(GenConfig)}
        for key, value in flat.items():
            if key in cls.FLAT_KEYS:
                kw[cls.FLAT_KEYS[key]] = value
            elif key.startswith("model.") and key[6:] in model_fields:
                model[key[6:]] = value
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kw, model=GenConfig(**model))


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    means: dict = field(default_factory=dict)


def seed_everything(seed):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


class Trainer:
    def __init__(self, cfg, text_encoder=None):
        self.cfg = cfg
        seed_everything(cfg.seed)
        self.model = TextPainter(cfg.model)
        self.disc = Discriminator(cfg.model)
        self.text_encoder = text_encoder or build_encoder({
            "textsem.backend": cfg.text_backend, "textsem.dim": cfg.text_dim,
            "textsem.vocab_seed": cfg.vocab_seed, "textsem.factory": cfg.text_factory,
        })
        self.text_encoder.requires_grad_(False)
        self.phi = RandomFeatures(seed=cfg.phi_seed)
        self.opt_g = torch.optim.Adam(self.model.parameters(), lr=cfg.lr_g, betas=cfg.betas)
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=cfg.lr_d, betas=cfg.betas)
        self.state = TrainState()
        self.log_file = None
        if cfg.out_dir:
            Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
            self.log_file = Path(cfg.out_dir) / "train_log.jsonl"

    # ------------------------------------------------------------------ data

    def batches(self, samples, epoch):
        items = all_elements(samples)
        order = np.random.default_rng([self.cfg.seed, epoch]).permutation(len(items))
        bs = self.cfg.batch_size
        for i in range(0, len(order), bs):
            yield make_batch([items[j] for j in order[i:i + bs]], font_path=self.cfg.font_path or None)

    # ------------------------------------------------------------------ steps

    def losses(self, batch, epoch):
        """Forward pass and every loss term for ``batch`` at ``epoch``."""
        out = self.model.forward_batch(batch, self.text_encoder)
        fake = paste_region(out, batch.gt, batch.true_sizes, batch.offsets)
        rec = rec_loss(out, batch.gt, batch.true_sizes, batch.offsets)
        per = perceptual_loss(out, batch.gt, self.phi, batch.true_sizes, batch.offsets)
        return out, fake, rec, per

    def d_step(self, batch, fake):
        """Discriminator update on the real crop vs the detached generated crop."""
        self.disc.requires_grad_(True)
        d_fake = self.disc(fake.detach(), batch.local_bg)
        d_real = self.disc(batch.gt, batch.local_bg)
        _, adv_d = adversarial_losses(d_fake, d_real)
        self._check_finite(batch, adv_d=adv_d)
        self.opt_d.zero_grad(set_to_none=True)
        adv_d.backward()
        self.opt_d.step()
        return adv_d.detach()

    def g_step(self, batch, fake, rec, per, epoch):
        """Generator update on lambda1*rec + lambda2*per + lambda3*adv; D stays frozen."""
        lam1, lam3 = schedule(epoch, self.cfg.r)
        self.disc.requires_grad_(False)
        try:
            adv_g, _ = adversarial_losses(self.disc(fake, batch.local_bg))
            total = lam1 * rec + self.cfg.lambda2 * per + lam3 * adv_g
            self._check_finite(batch, rec=rec, per=per, adv_g=adv_g, total=total)
            self.opt_g.zero_grad(set_to_none=True)
            total.backward()
            self.opt_g.step()
        finally:
            self.disc.requires_grad_(True)
        return adv_g.detach(), total.detach()

    def train_step(self, batch, epoch):
        out, fake, rec, per = self.losses(batch, epoch)
        adv_d = self.d_step(batch, fake)
        adv_g, total = self.g_step(batch, fake, rec, per, epoch)
        self.state.step += 1
        lam1, lam3 = schedule(epoch, self.cfg.r)
        return LossReport(
            rec=rec.item(), per=per.item(), adv_g=adv_g.item(), adv_d=adv_d.item(),
            lambda1=lam1, lambda2=self.cfg.lambda2, lambda3=lam3, total_g=total.item(),
        )

    def _check_finite(self, batch, **terms):
        bad = {k: float(v.detach()) for k, v in terms.items() if not torch.isfinite(v).all()}
        if bad:
            dump = {"step": self.state.step, "epoch": self.state.epoch, "batch_ids": list(batch.ids), "losses": bad}
            if self.cfg.out_dir:
                (Path(self.cfg.out_dir) / "nan_dump.json").write_text(json.dumps(dump, indent=2))
            raise TrainingDivergence(f"non-finite loss {bad} at step {self.state.step}, batch ids {batch.ids}")

    def train_epoch(self, samples):
        """One pass over ``samples`` at the schedule of the current epoch."""
        self.model.train()
        self.disc.train()
        epoch = self.state.epoch
        reports = []
        for batch in self.batches(samples, epoch):
            rep = self.train_step(batch, epoch)
            reports.append(rep)
            self._log(rep, epoch)
        agg = LossReport(**{k: float(np.mean([getattr(r, k) for r in reports])) for k in LossReport.__dataclass_fields__})
        self.state.means = agg.as_dict()
        self.state.epoch += 1
        return agg

    def _log(self, rep, epoch):
        if self.log_file is None:
            return
        rec = {"step": self.state.step, "epoch": epoch, "rec": rep.rec, "per": rep.per,
               "adv_g": rep.adv_g, "adv_d": rep.adv_d, "lambda1": rep.lambda1}
        with open(self.log_file, "a") as fh:
            fh.write(json.dumps(rec) + "\n")

    def fit(self, samples, epochs=None):
        epochs = self.cfg.epochs if epochs is None else epochs
        history = []
        while self.state.epoch < epochs:
            rep = self.train_epoch(samples)
            history.append(rep)
            log.info("epoch %d rec %.4f per %.4f adv_g %.4f adv_d %.4f",
                     self.state.epoch - 1, rep.rec, rep.per, rep.adv_g, rep.adv_d)
            if self.cfg.out_dir and self.state.epoch % self.cfg.checkpoint_interval == 0:
                self.save(Path(self.cfg.out_dir) / "checkpoint.pt")
        return history

    # ------------------------------------------------------------------ checkpoints

    def save(self, path):
        save_checkpoint(path, {
            "config": self.cfg.to_dict(),
            "model": self.model.state_dict(),
            "disc": self.disc.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "state": asdict(self.state),
            "rng": {"torch": torch.get_rng_state(), "numpy": np.random.get_state(), "python": random.getstate()},
        }, self.cfg.hash())

    @classmethod
    def load(cls, path, cfg=None, text_encoder=None):
        payload = load_checkpoint(path, expected_hash=cfg.hash() if cfg else None)
        if cfg is None:
            cfg = TrainConfig(**payload["config"])
        trainer = cls(cfg, text_encoder)
        trainer.model.load_state_dict(payload["model"])
        trainer.disc.load_state_dict(payload["disc"])
        trainer.opt_g.load_state_dict(payload["opt_g"])
        trainer.opt_d.load_state_dict(payload["opt_d"])
        trainer.state = TrainState(**payload["state"])
        rng = payload["rng"]
        torch.set_rng_state(rng["torch"])
        np.random.set_state(rng["numpy"])
        random.setstate(rng["python"])
        return trainer


def save_checkpoint(path, payload, config_hash):
    buf = io.BytesIO()
    torch.save({"version": CKPT_VERSION, "config_hash": config_hash, **payload}, buf)
    body = buf.getvalue()
    header = CKPT_MAGIC + struct.pack("<HQ", CKPT_VERSION, len(body)) + hashlib.sha256(body).digest()
    Path(path).write_bytes(header + body)


def load_checkpoint(path, expected_hash=None):
    raw = Path(path).read_bytes()
    hlen = len(CKPT_MAGIC) + 10 + 32
    if len(raw) < hlen or not raw.startswith(CKPT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint or corrupted header")
    version, size = struct.unpack("<HQ", raw[len(CKPT_MAGIC):len(CKPT_MAGIC) + 10])
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    body = raw[hlen:]
    if len(body) != size or hashlib.sha256(body).digest() != raw[hlen - 32:hlen]:
        raise CheckpointError(f"{path}: corrupted checkpoint (truncated or checksum mismatch)")
    payload = torch.load(io.BytesIO(body), map_location="cpu", weights_only=False)
    if expected_hash is not None and payload["config_hash"] != expected_hash:
        raise CheckpointError(f"{path}: config hash {payload['config_hash']} does not match {expected_hash}")
    return payload


# ---------------------------------------------------------------------- inference


@torch.no_grad()
def generate_crops(model, text_encoder, sample, elements=None, align=32, font_path=None):
    """Generate one uint8 (h, w, 3) text image per element (eval mode)."""
    model.eval()
    elements = sample.elements if elements is None else elements
    crops = []
    for el in elements:
        batch = make_batch([(sample, el)], align=align, font_path=font_path)
        out = model.forward_batch(batch, text_encoder)[0]
        (oy, ox), (h, w) = batch.offsets[0], batch.true_sizes[0]
        crops.append(to_uint8(out[:, oy:oy + h, ox:ox + w]))
    return crops


def composite(background, crops, bboxes):
    """Paste crops back into a copy of the background at their bboxes."""
    out = np.array(background, dtype=np.uint8, copy=True)
    for crop, (x, y, w, h) in zip(crops, bboxes):
        out[y:y + h, x:x + w] = crop
    return out


def evaluate_generator(model, text_encoder, samples, font_path=None, embed=None):
    """In-bbox metrics of generated crops against the ground-truth crops."""
    from .metrics import evaluate_pairs

    preds, gts = [], []
    for s in samples:
        preds += generate_crops(model, text_encoder, s, font_path=font_path)
        gts += [el.gt_text_image for el in s.elements]
    return evaluate_pairs(preds, gts, embed)
