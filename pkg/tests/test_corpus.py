import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textpainter.corpus import (
    CorpusConfig, PosterSample, TextElement, all_elements, annotation_of, dump_json,
    filter_corpus, make_batch, read_annotation, read_corpus, synth_corpus, to_uint8,
    write_annotation, write_corpus,
)
from textpainter.glyph import render_glyph

from .conftest import SMALL_POSTER


# ---------------------------------------------------------------- oracles


def reference_crop(img, bbox, out_h, out_w):
    """Edge-padded poster, then a plain slice centred on the bbox."""
    x, y, w, h = bbox
    pad = max(out_h, out_w)
    padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    top = y - (out_h - h) // 2 + pad
    left = x - (out_w - w) // 2 + pad
    return padded[top:top + out_h, left:left + out_w]


def recount_filter(samples):
    survivors = []
    for s in samples:
        kept = 0
        for el in s.elements:
            x, y, w, h = el.bbox
            if w / h > 11:
                continue
            if h < 30 or h > 100:
                continue
            if w < 50 or w > 450:
                continue
            if len(el.content) < 1 or len(el.content) > 11:
                continue
            kept += 1
        if 1 <= kept <= 5:
            survivors.append((s.source_id, kept))
    return survivors


def blank_poster(elements, h=750, w=513, sid="p"):
    bg = np.zeros((h, w, 3), dtype=np.uint8)
    return PosterSample(background=bg, elements=elements, source_id=sid)


# ---------------------------------------------------------------- synthesis


def test_synth_shapes(default_corpus):
    assert len(default_corpus) == 4
    for s in default_corpus:
        assert s.background.shape == (750, 513, 3)
        assert s.poster.shape == (750, 513, 3)
        assert 1 <= len(s.elements) <= 5
        for el in s.elements:
            x, y, w, h = el.bbox
            assert x >= 0 and y >= 0 and x + w <= 513 and y + h <= 750
            assert el.gt_text_image.shape == (h, w, 3)


def test_synth_deterministic(tmp_path, default_corpus):
    again = synth_corpus(1, 4)
    write_corpus(default_corpus, tmp_path / "a", seed=1)
    write_corpus(again, tmp_path / "b", seed=1)
    for f in sorted((tmp_path / "a" / "annotations").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "annotations" / f.name).read_bytes()
    assert (tmp_path / "a" / "meta.json").read_bytes() == (tmp_path / "b" / "meta.json").read_bytes()
    for a, b in zip(default_corpus, again):
        assert np.array_equal(a.poster, b.poster)


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        synth_corpus(0, 1, CorpusConfig(poster_h=0))
    with pytest.raises(ValueError):
        synth_corpus(0, 0)


@pytest.fixture(scope="module")
def corpus_1000():
    return synth_corpus(1, 1000)


def test_text_count_in_range_for_1000(corpus_1000):
    assert all(1 <= len(s.elements) <= 5 for s in corpus_1000)
    frac_kw = np.mean([any(el.keyword for el in s.elements) for s in corpus_1000])
    assert 0.4 < frac_kw < 0.6


def test_metadata_colors_roundtrip_through_crops(corpus_1000):
    for s in corpus_1000[:300]:
        for el in s.elements:
            g = render_glyph(el.content, el.size)
            solid = g.solid_mask
            cols = np.zeros(g.pixels.shape[1], dtype=bool)
            if el.keyword:
                for x0, x1 in g.char_spans[el.keyword[0]:el.keyword[1]]:
                    cols[max(int(np.floor(x0)), 0):int(np.ceil(x1))] = True
            main = solid & ~cols[None, :]
            assert main.any()
            assert (el.gt_text_image[main] == np.array(el.color)).all()
            if el.keyword:
                kw = solid & cols[None, :]
                assert (el.gt_text_image[kw] == np.array(el.keyword_color)).all()


# ---------------------------------------------------------------- filtering


def test_filter_removes_wide_element():
    keep = TextElement("ok", (0, 0, 100, 40))
    wide = TextElement("wide", (0, 100, 600, 50))
    out = filter_corpus([blank_poster([keep, wide], w=700)])
    assert [el.content for el in out[0].elements] == ["ok"]


def test_filter_boundaries_inclusive():
    el = TextElement("a", (0, 0, 50, 30))
    assert filter_corpus([blank_poster([el])])[0].elements == [el]
    edge = TextElement("x" * 11, (0, 0, 450, 100))
    assert len(filter_corpus([blank_poster([edge])])) == 1


def test_filter_drops_posters_with_too_many_or_no_texts():
    six = [TextElement("t", (0, 40 * i, 60, 35)) for i in range(6)]
    none_left = [TextElement("t", (0, 0, 60, 10))]
    assert filter_corpus([blank_poster(six), blank_poster(none_left)]) == []


def inject_violations(samples, rng):
    out = []
    for s in samples:
        s = copy.copy(s)
        els = list(s.elements)
        for _ in range(rng.integers(0, 5)):
            kind = rng.integers(5)
            h = int(rng.integers(20, 120))
            w = int(rng.integers(30, 520))
            content = "x" * int(rng.integers(1, 16))
            if kind == 0:
                w = 12 * h
            els.append(TextElement(content, (0, 0, w, h)))
        s.elements = els
        out.append(s)
    return out


def test_filter_matches_rule_recount():
    rng = np.random.default_rng(5)
    samples = inject_violations(synth_corpus(2, 100, SMALL_POSTER), rng)
    got = [(s.source_id, len(s.elements)) for s in filter_corpus(samples)]
    assert got == recount_filter(samples)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 700), st.integers(1, 150), st.integers(1, 15)), min_size=0, max_size=8))
def test_filter_idempotent(specs):
    els = [TextElement("y" * n, (0, 0, w, h)) for w, h, n in specs]
    once = filter_corpus([blank_poster(els)])
    twice = filter_corpus(once)
    assert [[el.bbox for el in s.elements] for s in once] == [[el.bbox for el in s.elements] for s in twice]


# ---------------------------------------------------------------- batching


def test_single_element_padding_is_aligned(default_corpus):
    s = default_corpus[0]
    el = TextElement("SALE", (100, 100, 200, 40))
    b = make_batch([(s, el)])
    assert b.glyph.shape[-2:] == (64, 224)
    assert b.true_sizes == [(40, 200)]


def test_corner_element_replicates_edges(default_corpus):
    s = default_corpus[0]
    el = TextElement("TOP", (0, 0, 70, 35))
    b = make_batch([(s, el)])
    lb = to_uint8(b.local_bg[0])
    assert np.array_equal(lb, reference_crop(s.background, el.bbox, 64, 96))
    oy, ox = b.offsets[0]
    assert np.array_equal(to_uint8(b.gt[0])[oy:oy + 35, ox:ox + 70], s.poster[0:35, 0:70])
    # rows above the poster repeat row 0
    assert np.array_equal(lb[0], lb[oy])


def test_two_elements_share_padding(default_corpus):
    s = default_corpus[1]
    a = TextElement("tea", (20, 300, 200, 40))
    c = TextElement("cake SALE", (150, 500, 300, 60))
    b = make_batch([(s, a), (s, c)])
    assert b.glyph.shape == (2, 1, 64, 320)
    assert b.true_sizes == [(40, 200), (60, 300)]
    for i, el in enumerate([a, c]):
        assert np.array_equal(to_uint8(b.local_bg[i]), reference_crop(s.background, el.bbox, 64, 320))
        assert np.array_equal(to_uint8(b.gt[i]), reference_crop(s.poster, el.bbox, 64, 320))


def test_glyph_padding_is_blank_and_unresampled(default_corpus):
    s = default_corpus[0]
    el = s.elements[0]
    b = make_batch([(s, el)])
    (oy, ox), (h, w) = b.offsets[0], b.true_sizes[0]
    g = b.glyph[0, 0].numpy()
    assert np.array_equal(g[oy:oy + h, ox:ox + w], render_glyph(el.content, (h, w)).pixels)
    g[oy:oy + h, ox:ox + w] = 0
    assert g.sum() == 0


def test_position_mask_marks_bbox(default_corpus):
    s = default_corpus[0]
    el = s.elements[0]
    x, y, w, h = el.bbox
    m = make_batch([(s, el)]).pos_mask[0, 0].numpy()
    assert m.sum() == w * h and m[y:y + h, x:x + w].all()


def test_padding_uses_poster_not_constant(default_corpus):
    s = default_corpus[0]
    el = s.elements[0]
    b = make_batch([(s, el)], align=64)
    ref = reference_crop(s.background, el.bbox, *b.glyph.shape[-2:])
    assert np.array_equal(to_uint8(b.local_bg[0]), ref)


def test_bbox_larger_than_poster_rejected(default_corpus):
    with pytest.raises(ValueError):
        make_batch([(default_corpus[0], TextElement("x", (0, 0, 600, 40)))])
    with pytest.raises(ValueError):
        make_batch([])


def test_batch_ids(default_corpus):
    items = all_elements(default_corpus)[:3]
    assert make_batch(items).ids == [s.element_id(s.elements.index(el)) for s, el in items]


# ---------------------------------------------------------------- I/O


def test_annotation_roundtrip_byte_stable(tmp_path, default_corpus):
    ann = annotation_of(default_corpus[0], "images/x_bg.png")
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_annotation(ann, p1)
    write_annotation(read_annotation(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text() == dump_json(ann)


def test_annotation_schema(tmp_path, default_corpus):
    write_corpus(default_corpus[:1], tmp_path)
    sid = default_corpus[0].source_id
    ann = read_annotation(tmp_path / "annotations" / f"{sid}.json")
    assert ann["background"] == f"images/{sid}_bg.png"
    assert ann["elements"][0]["bbox"] == list(default_corpus[0].elements[0].bbox)
    assert (tmp_path / "meta.json").exists()


def test_corpus_roundtrip(tmp_path, default_corpus):
    write_corpus(default_corpus, tmp_path)
    back = read_corpus(tmp_path)
    assert [s.source_id for s in back] == [s.source_id for s in default_corpus]
    for a, b in zip(default_corpus, back):
        assert np.array_equal(a.background, b.background)
        assert np.array_equal(a.poster, b.poster)
        for ea, eb in zip(a.elements, b.elements):
            assert (ea.content, ea.bbox, ea.color, ea.keyword) == (eb.content, eb.bbox, eb.color, eb.keyword)
            assert np.array_equal(ea.gt_text_image, eb.gt_text_image)


def test_bad_annotation_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"elements": []}')
    with pytest.raises(ValueError):
        read_annotation(p)
