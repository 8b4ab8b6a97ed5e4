import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from augcap.preprocess import (
    FilterPolicy,
    SourceClipMeta,
    filter_corpus,
    filter_source,
    read_source_manifest,
    write_source_manifest,
)


def meta(i=0, dur=4.0, labels=("dog barking",)):
    return SourceClipMeta(f"c{i}", "a.wav", labels, 1.0, 1.0 + dur)


def test_short_clip_rejected_for_duration():
    assert filter_source(meta(dur=1.5)).reason == "duration"


@pytest.mark.parametrize("label", ["unknown", "Background/Environment", "  UNKNOWN "])
def test_excluded_class(label):
    assert filter_source(meta(labels=(label,))).reason == "class"


def test_any_excluded_label_rejects():
    assert filter_source(meta(labels=("dog", "unknown"))).reason == "class"


def test_accept():
    assert filter_source(meta(dur=4.0)).accepted


def test_substrings_do_not_match():
    assert filter_source(meta(labels=("unknown animal",))).accepted


def test_exactly_min_duration_accepted():
    assert filter_source(meta(dur=2.0)).accepted


def test_meta_validation():
    with pytest.raises(ValueError):
        SourceClipMeta("x", "a.wav", (), 0.0, 1.0)
    with pytest.raises(ValueError):
        SourceClipMeta("x", "a.wav", ("dog",), 2.0, 1.0)


def test_manifest_round_trip(tmp_path):
    metas = [meta(i, dur=1 + i) for i in range(3)]
    write_source_manifest(tmp_path / "s.jsonl", metas)
    assert list(read_source_manifest(tmp_path / "s.jsonl")) == metas
    first = json.loads((tmp_path / "s.jsonl").read_text().splitlines()[0])
    assert set(first) == {"id", "audio_path", "labels", "start_s", "end_s"}


corpus_st = st.lists(
    st.tuples(st.floats(0.1, 10.0), st.sampled_from(["dog", "rain", "unknown", "siren"])),
    min_size=0, max_size=40)


@given(corpus_st, st.randoms())
def test_filter_order_independent(items, rnd):
    metas = [meta(i, d, (lab,)) for i, (d, lab) in enumerate(items)]
    shuffled = metas[:]
    rnd.shuffle(shuffled)
    assert filter_corpus(metas) == filter_corpus(shuffled)


@given(corpus_st, st.floats(0.5, 5.0), st.floats(0.0, 5.0))
def test_monotone_in_min_duration(items, lo, extra):
    metas = [meta(i, d, (lab,)) for i, (d, lab) in enumerate(items)]
    low, _ = filter_corpus(metas, FilterPolicy(lo))
    high, _ = filter_corpus(metas, FilterPolicy(lo + extra))
    assert {m.id for m in high} <= {m.id for m in low}
