from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from bucketpack.corpus import Document, DocumentSet
from bucketpack.metrics import (
    concatenation_ratio,
    evaluate,
    padding_ratio,
    truncation_ratio,
)
from bucketpack.packing import (
    BucketConfig,
    PackedDataset,
    PackedSample,
    Segment,
    SourceInfo,
    pack_fixed,
    pack_greedy_buckets,
    pack_naive_buckets,
)


def corpus(lengths):
    return DocumentSet(docs=tuple(Document(f"d{i:03d}", n) for i, n in enumerate(lengths)))


def dataset(samples, num_docs, total_tokens):
    return PackedDataset(
        samples=tuple(samples),
        source=SourceInfo(num_docs, total_tokens),
        strategy={"name": "test"},
    )


def whole(doc_id, length):
    return Segment(doc_id, 0, length)


# ── padding ratio ────────────────────────────────────────────────────────


def test_padding_ratio_zero_when_full():
    packed = dataset([PackedSample(8, (whole("a", 8),), 0)], 1, 8)
    assert padding_ratio(packed) == 0


def test_padding_ratio_direct_formula():
    packed = dataset(
        [
            PackedSample(8, (whole("a", 6),), 2),
            PackedSample(8, (whole("b", 8),), 0),
        ],
        2,
        14,
    )
    assert padding_ratio(packed) == Fraction(2, 16)


def test_padding_ratio_rejects_empty():
    packed = dataset([], 0, 0)
    with pytest.raises(ValueError, match="empty"):
        padding_ratio(packed)


# ── truncation ratio ─────────────────────────────────────────────────────


def test_truncation_ratio_zero_when_whole():
    packed = dataset(
        [PackedSample(8, (whole("a", 4), whole("b", 4)), 0)], 2, 8
    )
    assert truncation_ratio(packed) == 0


def test_truncation_ratio_direct_formula():
    packed = dataset(
        [
            PackedSample(8, (Segment("a", 0, 4), whole("b", 4)), 0),
            PackedSample(8, (Segment("a", 4, 8),), 4),
        ],
        2,
        12,
    )
    assert truncation_ratio(packed) == Fraction(1, 2)


def test_truncation_counts_multi_chunk_doc_once():
    packed = pack_greedy_buckets(corpus([20]), BucketConfig((8,), 0.0))
    assert truncation_ratio(packed) == 1


def test_truncation_ratio_rejects_no_source_docs():
    packed = dataset([], 0, 0)
    with pytest.raises(ValueError, match="source"):
        truncation_ratio(packed)


# ── concatenation ratio ──────────────────────────────────────────────────


def test_concatenation_ratio_docs_per_sample():
    packed = dataset(
        [
            PackedSample(8, (whole("a", 4), whole("b", 4)), 0),
            PackedSample(8, (whole("c", 4), whole("d", 4)), 0),
        ],
        4,
        16,
    )
    assert concatenation_ratio(packed) == 2


def test_concatenation_ratio_below_one_for_split_doc():
    packed = pack_fixed(corpus([21]), 3, seed=0)
    assert concatenation_ratio(packed) == Fraction(1, 7)


def test_concatenation_ratio_greedy_fixture():
    packed = pack_greedy_buckets(corpus([6, 3, 2]), BucketConfig((8,), 0.2))
    assert concatenation_ratio(packed) == Fraction(3, 2)


# ── evaluate ─────────────────────────────────────────────────────────────


def test_evaluate_greedy_fixture():
    packed = pack_greedy_buckets(corpus([6, 5, 4]), BucketConfig((8,), 0.2))
    report = evaluate(packed)
    assert report.r_pad == Fraction(1, 16)
    assert report.r_tru == Fraction(1, 3)
    assert report.r_cat == Fraction(3, 2)


def test_evaluate_fixed_fixture():
    packed = pack_fixed(corpus([4, 5, 3]), 5, seed=1)
    report = evaluate(packed)
    assert report.r_pad == Fraction(3, 15)
    assert report.r_tru == Fraction(2, 3)
    assert report.r_cat == Fraction(1, 1)


def test_evaluate_exact_fit_identity():
    packed = pack_fixed(corpus([8]), 8, seed=0)
    report = evaluate(packed)
    assert (report.r_pad, report.r_tru, report.r_cat) == (0, 0, 1)


def test_report_counts_back_the_ratios():
    packed = pack_greedy_buckets(corpus([6, 5, 4]), BucketConfig((8,), 0.2))
    report = evaluate(packed)
    assert report.r_pad == Fraction(report.total_pad, report.total_len)
    assert report.r_tru == Fraction(report.truncated_docs, report.num_docs)
    assert report.r_cat == Fraction(report.num_docs, report.num_samples)


@settings(max_examples=80, deadline=None)
@given(
    lengths=st.lists(st.integers(1, 150), min_size=1, max_size=30),
    caps=st.lists(st.integers(2, 64), min_size=1, max_size=3, unique=True).map(
        lambda c: tuple(sorted(c))
    ),
    threshold=st.floats(0.0, 1.0, allow_nan=False),
    seed=st.integers(0, 1000),
)
def test_evaluate_is_exact_and_consistent(lengths, caps, threshold, seed):
    docs = corpus(lengths)
    cfg = BucketConfig(caps, threshold)
    for packed in (
        pack_fixed(docs, caps[-1], seed=seed),
        pack_naive_buckets(docs, cfg, seed=seed),
        pack_greedy_buckets(docs, cfg),
    ):
        report = evaluate(packed)
        assert isinstance(report.r_pad, Fraction)
        assert report.r_pad == padding_ratio(packed)
        assert report.r_tru == truncation_ratio(packed)
        assert report.r_cat == concatenation_ratio(packed)
        assert 0 <= report.r_pad <= 1
        assert 0 <= report.r_tru <= 1
        assert report.r_cat > 0
