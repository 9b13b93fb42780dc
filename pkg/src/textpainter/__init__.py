"""Harmonious, keyword-aware text image generation for poster backgrounds."""

from .corpus import (
    CorpusConfig, GenBatch, PosterSample, TextElement, filter_corpus, make_batch,
    read_corpus, synth_corpus, write_corpus,
)
from .glyph import GlyphImage, render_glyph
from .losses import LossReport, schedule
from .net import Discriminator, GenConfig, TextPainter
from .textsem import TokenBundle, encode_text, toy_encoder

__version__ = "0.1.0"
