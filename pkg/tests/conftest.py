import numpy as np
import pytest
import torch

from textpainter.corpus import CorpusConfig, synth_corpus
from textpainter.net import GenConfig

torch.set_num_threads(1)

SMALL_POSTER = CorpusConfig(poster_h=256, poster_w=192, text_h=(30, 60))


def tiny_gen_config(**kw):
    base = dict(base_channels=32, style_dim=32, text_dim=16, encoder_depths=(1, 1, 1, 1),
                style_width=4, disc_width=4, style_downsample=2)
    base.update(kw)
    return GenConfig(**base)


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(7, 6, SMALL_POSTER)


@pytest.fixture(scope="session")
def default_corpus():
    return synth_corpus(1, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
