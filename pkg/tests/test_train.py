import json

import numpy as np
import pytest
import torch

from textpainter.corpus import all_elements, make_batch
from textpainter.losses import schedule
from textpainter.train import (
    CheckpointError, TrainConfig, Trainer, TrainingDivergence, composite, evaluate_generator,
    generate_crops, load_checkpoint,
)

from .conftest import tiny_gen_config


def make_cfg(tmp_path=None, **kw):
    base = dict(epochs=2, batch_size=4, seed=3, text_dim=16, model=tiny_gen_config(),
                out_dir=str(tmp_path) if tmp_path else "")
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def four(small_corpus):
    return small_corpus[:4]


def probe(trainer, corpus):
    batch = make_batch(all_elements(corpus)[:2])
    trainer.model.eval()
    with torch.no_grad():
        return trainer.model.forward_batch(batch, trainer.text_encoder)


def params(module):
    return [p.detach().clone() for p in module.parameters()]


def same(a, b):
    return all(torch.equal(x, y) for x, y in zip(a, b))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_g=0)
    with pytest.raises(ValueError):
        TrainConfig(adv_variant="wgan")
    with pytest.raises(ValueError):
        TrainConfig.from_flat({"train.bogus": 1})
    cfg = TrainConfig.from_flat({"train.epochs": 3, "loss.r": 0.9, "model.base_channels": 64, "textsem.dim": 32})
    assert (cfg.epochs, cfg.r, cfg.model.base_channels, cfg.model.text_dim) == (3, 0.9, 64, 32)


def test_epoch_zero_reports_lambda_one(four):
    t = Trainer(make_cfg())
    rep = t.train_epoch(four)
    assert rep.lambda1 == 1.0 and rep.lambda3 == 0.0
    assert t.state.epoch == 1 and t.state.step > 0


def test_two_epochs_bit_deterministic(four):
    a = Trainer(make_cfg()).fit(four)
    b = Trainer(make_cfg()).fit(four)
    assert a[-1].rec == b[-1].rec and a[-1].total_g == b[-1].total_g


def test_log_records_follow_schedule(tmp_path, four):
    t = Trainer(make_cfg(tmp_path))
    t.fit(four)
    lines = [json.loads(l) for l in (tmp_path / "train_log.jsonl").read_text().splitlines()]
    assert len(lines) == t.state.step
    for rec in lines:
        assert set(rec) == {"step", "epoch", "rec", "per", "adv_g", "adv_d", "lambda1"}
        assert rec["lambda1"] == schedule(rec["epoch"], 0.85)[0]
    assert [r["step"] for r in lines] == list(range(1, len(lines) + 1))
    assert (tmp_path / "checkpoint.pt").exists()


def test_steps_touch_only_their_network(four):
    t = Trainer(make_cfg())
    batch = next(t.batches(four, 0))
    enc_before = params(t.text_encoder)
    _, fake, rec, per = t.losses(batch, 1)
    g0, d0 = params(t.model), params(t.disc)
    t.d_step(batch, fake)
    assert same(g0, params(t.model)) and not same(d0, params(t.disc))
    d1 = params(t.disc)
    t.g_step(batch, fake, rec, per, 1)
    assert same(d1, params(t.disc)) and not same(g0, params(t.model))
    assert same(enc_before, params(t.text_encoder))


def test_text_encoder_unchanged_over_run(four):
    t = Trainer(make_cfg())
    before = params(t.text_encoder)
    t.fit(four)
    assert same(before, params(t.text_encoder))


def test_checkpoint_roundtrip(tmp_path, four):
    t = Trainer(make_cfg())
    t.train_epoch(four)
    path = tmp_path / "c.pt"
    t.save(path)
    u = Trainer.load(path, make_cfg())
    assert torch.equal(probe(t, four), probe(u, four))
    assert u.state.epoch == 1


def test_resume_continues_schedule(tmp_path, four):
    t = Trainer(make_cfg())
    t.train_epoch(four)
    t.train_epoch(four)
    t.save(tmp_path / "c.pt")
    u = Trainer.load(tmp_path / "c.pt")
    rep = u.train_epoch(four)
    assert rep.lambda1 == 0.85 ** 2


def test_resume_matches_uninterrupted(tmp_path, four):
    full = Trainer(make_cfg()).fit(four, epochs=2)
    t = Trainer(make_cfg())
    t.fit(four, epochs=1)
    t.save(tmp_path / "c.pt")
    resumed = Trainer.load(tmp_path / "c.pt", make_cfg()).fit(four, epochs=2)
    assert resumed[-1].rec == full[-1].rec


def test_truncated_checkpoint(tmp_path, four):
    t = Trainer(make_cfg())
    t.save(tmp_path / "c.pt")
    raw = (tmp_path / "c.pt").read_bytes()
    (tmp_path / "t.pt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.pt")
    (tmp_path / "junk.pt").write_bytes(b"nope")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.pt")


def test_config_hash_mismatch(tmp_path):
    t = Trainer(make_cfg())
    t.save(tmp_path / "c.pt")
    with pytest.raises(CheckpointError):
        Trainer.load(tmp_path / "c.pt", make_cfg(model=tiny_gen_config(attn_blocks=(5,))))


def test_nan_aborts_with_batch_ids(tmp_path, four):
    t = Trainer(make_cfg(tmp_path))
    with torch.no_grad():
        t.model.generator.b1_rgb.conv.weight.fill_(float("nan"))
    with pytest.raises(TrainingDivergence, match="batch ids"):
        t.train_epoch(four)
    dump = json.loads((tmp_path / "nan_dump.json").read_text())
    assert dump["batch_ids"] and all(i.startswith(four[0].source_id[:3]) for i in dump["batch_ids"])


def test_generate_and_composite(four):
    t = Trainer(make_cfg())
    s = four[0]
    crops = generate_crops(t.model, t.text_encoder, s)
    assert [c.shape for c in crops] == [el.gt_text_image.shape for el in s.elements]
    comp = composite(s.background, crops, [el.bbox for el in s.elements])
    inside = np.zeros(s.background.shape[:2], dtype=bool)
    for el in s.elements:
        x, y, w, h = el.bbox
        inside[y:y + h, x:x + w] = True
    assert np.array_equal(comp[~inside], s.background[~inside])
    assert np.array_equal(composite(s.background, [], []), s.background)
    rep = evaluate_generator(t.model, t.text_encoder, four[:2])
    assert rep.n_pairs == len(four[0].elements) + len(four[1].elements)
