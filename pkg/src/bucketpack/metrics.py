"""Composition-quality metrics over a packed dataset.

Three ratios summarize a packing:

* padding ratio: pad tokens over all tokens of the packed samples,
* truncation ratio: fraction of original documents split into two or more
  pieces (a document split into many pieces still counts once),
* concatenation ratio: original documents per training sample.

All three are computed from segment provenance and pad counts alone, never
from token payloads, and are kept as exact rationals; rendering to decimals
happens at the report layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .packing import PackedDataset


@dataclass(frozen=True)
class MetricsReport:
    """The three ratios plus the counts they are derived from."""

    r_pad: Fraction
    r_tru: Fraction
    r_cat: Fraction
    num_docs: int
    num_samples: int
    total_pad: int
    total_len: int
    truncated_docs: int


def padding_ratio(packed: PackedDataset) -> Fraction:
    """Pad tokens over total tokens across all samples (capacities included)."""
    total_len = packed.total_capacity()
    if total_len == 0:
        raise ValueError("cannot compute padding ratio of an empty packing")
    return Fraction(packed.total_pad(), total_len)


def truncation_ratio(packed: PackedDataset) -> Fraction:
    """Fraction of source documents represented by two or more segments."""
    if packed.source.num_docs == 0:
        raise ValueError("cannot compute truncation ratio without source documents")
    truncated = sum(1 for n in packed.segments_per_doc().values() if n >= 2)
    return Fraction(truncated, packed.source.num_docs)


def concatenation_ratio(packed: PackedDataset) -> Fraction:
    """Source documents per training sample."""
    if len(packed.samples) == 0:
        raise ValueError("cannot compute concatenation ratio of an empty packing")
    return Fraction(packed.source.num_docs, len(packed.samples))


def evaluate(packed: PackedDataset) -> MetricsReport:
    """All three ratios plus supporting counts, consistent with the single-ratio functions."""
    truncated = sum(1 for n in packed.segments_per_doc().values() if n >= 2)
    return MetricsReport(
        r_pad=padding_ratio(packed),
        r_tru=truncation_ratio(packed),
        r_cat=concatenation_ratio(packed),
        num_docs=packed.source.num_docs,
        num_samples=len(packed.samples),
        total_pad=packed.total_pad(),
        total_len=packed.total_capacity(),
        truncated_docs=truncated,
    )
