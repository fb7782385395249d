"""Three strategies for composing documents into fixed-capacity samples.

All packers emit a PackedDataset whose samples are exactly bucket-sized
(segments plus trailing pad tokens always fill the capacity) and whose
segments give complete provenance: every token of every input document is
covered exactly once, so a packing can be unpacked back into the corpus.

Strategies:

* ``pack_fixed``: shuffle, concatenate into one stream, split every L tokens,
  pad only the final partial sample.
* ``pack_naive_buckets``: assign each document to the smallest capacity that
  holds it (largest if none does), then run the fixed-length procedure within
  each capacity group.
* ``pack_greedy_buckets``: deterministic greedy composition. Sort documents by
  descending length, pick the smallest bucket that fits the longest remaining
  document, sweep the rest first-fit into the leftover space, then either
  chunk a prefix of the shortest remaining document into the hole or pad,
  depending on whether the hole exceeds the padding threshold.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Document, DocumentSet

_INF = float("inf")


@dataclass(frozen=True)
class BucketConfig:
    """An ascending set of sample capacities plus the padding threshold.

    ``padding_threshold`` is the per-sample padding budget: leftover space
    larger than this fraction of the capacity is filled by chunking a
    document, smaller leftovers are padded.
    """

    capacities: tuple[int, ...]
    padding_threshold: float = 0.01

    def __post_init__(self) -> None:
        if not self.capacities:
            raise ValueError("capacities must be non-empty")
        if any(b <= a for a, b in zip(self.capacities, self.capacities[1:])):
            raise ValueError("capacities must be ascending")
        if any(c < 2 for c in self.capacities):
            raise ValueError("capacities must all be >= 2")
        if not 0.0 <= self.padding_threshold <= 1.0:
            raise ValueError("padding_threshold must lie in [0, 1]")

    @property
    def max_capacity(self) -> int:
        return self.capacities[-1]


@dataclass(frozen=True)
class Segment:
    """A half-open token span [start, end) of one document."""

    doc_id: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid segment [{self.start}, {self.end}) of {self.doc_id!r}")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PackedSample:
    """One training sample: ordered segments plus trailing padding."""

    capacity: int
    segments: tuple[Segment, ...]
    pad_count: int

    def __post_init__(self) -> None:
        body = sum(seg.length for seg in self.segments)
        if self.pad_count < 0:
            raise ValueError("pad_count must be >= 0")
        if body + self.pad_count != self.capacity:
            raise ValueError(
                f"sample not exactly capacity-sized: {body} body + {self.pad_count} pad "
                f"!= {self.capacity}"
            )


@dataclass(frozen=True)
class SourceInfo:
    """Identity of the corpus a packing was produced from."""

    num_docs: int
    total_tokens: int


@dataclass(frozen=True)
class PackedDataset:
    """All samples of one packing run plus strategy and source provenance."""

    samples: tuple[PackedSample, ...]
    source: SourceInfo
    strategy: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def per_bucket_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for sample in self.samples:
            counts[sample.capacity] = counts.get(sample.capacity, 0) + 1
        return dict(sorted(counts.items()))

    def total_pad(self) -> int:
        return sum(s.pad_count for s in self.samples)

    def total_capacity(self) -> int:
        return sum(s.capacity for s in self.samples)

    def segments_per_doc(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for sample in self.samples:
            for seg in sample.segments:
                counts[seg.doc_id] = counts.get(seg.doc_id, 0) + 1
        return counts


def select_bucket(doc_length: int, config: BucketConfig) -> int:
    """Smallest capacity that holds the document, or the largest if none does."""
    if doc_length < 1:
        raise ValueError("doc_length must be >= 1")
    i = bisect.bisect_left(config.capacities, doc_length)
    if i == len(config.capacities):
        return config.capacities[-1]
    return config.capacities[i]


def _check_seed(seed: int) -> None:
    if seed < 0:
        raise ValueError("seed must be non-negative")


def _concat_split(docs_in_order: list[Document], capacity: int) -> list[PackedSample]:
    """Concatenate documents into one stream and cut it every ``capacity`` tokens."""
    samples: list[PackedSample] = []
    segments: list[Segment] = []
    space = capacity
    for doc in docs_in_order:
        offset = 0
        while offset < doc.length:
            take = min(space, doc.length - offset)
            segments.append(Segment(doc.id, offset, offset + take))
            offset += take
            space -= take
            if space == 0:
                samples.append(PackedSample(capacity, tuple(segments), 0))
                segments = []
                space = capacity
    if segments:
        samples.append(PackedSample(capacity, tuple(segments), space))
    return samples


def pack_fixed(docs: DocumentSet, length: int, seed: int = 0) -> PackedDataset:
    """Shuffle, concatenate, and split the corpus at a fixed sample length.

    Only the final partial sample is padded, so the sample count is always
    ``ceil(total_tokens / length)``.
    """
    if length < 2:
        raise ValueError("length must be >= 2")
    _check_seed(seed)
    order = np.random.default_rng(seed).permutation(len(docs.docs))
    shuffled = [docs.docs[int(i)] for i in order]
    samples = _concat_split(shuffled, length)
    return PackedDataset(
        samples=tuple(samples),
        source=SourceInfo(len(docs.docs), docs.total_tokens),
        strategy={"name": "fixed", "length": length, "seed": seed},
    )


def pack_naive_buckets(docs: DocumentSet, config: BucketConfig, seed: int = 0) -> PackedDataset:
    """Partition documents by smallest fitting capacity, then concat-split per group.

    Documents longer than every capacity land in the largest group and are
    split there. Each group is shuffled independently of the others.
    """
    _check_seed(seed)
    groups: dict[int, list[Document]] = {cap: [] for cap in config.capacities}
    for doc in docs.docs:
        groups[select_bucket(doc.length, config)].append(doc)
    samples: list[PackedSample] = []
    for cap in config.capacities:
        group = groups[cap]
        if not group:
            continue
        order = np.random.default_rng([seed, cap]).permutation(len(group))
        samples.extend(_concat_split([group[int(i)] for i in order], cap))
    return PackedDataset(
        samples=tuple(samples),
        source=SourceInfo(len(docs.docs), docs.total_tokens),
        strategy={"name": "naive", "capacities": list(config.capacities), "seed": seed},
    )


class _SortedPool:
    """Remaining documents ordered by (descending length, ascending id).

    Stored as an ascending list of (length, rank) keys where rank is the
    document's position in ascending id order, so bisect gives O(log n)
    lookups of the longest document, the longest that fits a given space,
    and the shortest (the last element of the descending order). All lookups
    return positions into the key list; taking a document pops it there.
    """

    def __init__(self, docs: tuple[Document, ...]):
        order = sorted(range(len(docs)), key=lambda i: docs[i].id)
        self.ids = [docs[i].id for i in order]
        self.offset = [0] * len(docs)
        self.keys: list[tuple[int, int]] = sorted(
            (docs[i].length, rank) for rank, i in enumerate(order)
        )

    def __bool__(self) -> bool:
        return bool(self.keys)

    def longest(self) -> int:
        length = self.keys[-1][0]
        return bisect.bisect_left(self.keys, (length, -1))

    def longest_fitting(self, space: int) -> int | None:
        i = bisect.bisect_right(self.keys, (space, _INF)) - 1
        if i < 0:
            return None
        length = self.keys[i][0]
        return bisect.bisect_left(self.keys, (length, -1))

    def shortest(self) -> int:
        length = self.keys[0][0]
        return bisect.bisect_right(self.keys, (length, _INF)) - 1

    def length_at(self, pos: int) -> int:
        return self.keys[pos][0]

    def take_whole(self, pos: int) -> Segment:
        length, rank = self.keys.pop(pos)
        start = self.offset[rank]
        self.offset[rank] = start + length
        return Segment(self.ids[rank], start, start + length)

    def take_prefix(self, pos: int, size: int) -> Segment:
        length, rank = self.keys.pop(pos)
        start = self.offset[rank]
        self.offset[rank] = start + size
        bisect.insort(self.keys, (length - size, rank))
        return Segment(self.ids[rank], start, start + size)


def pack_greedy_buckets(docs: DocumentSet, config: BucketConfig) -> PackedDataset:
    """Greedy multi-bucket composition. Deterministic: no randomness anywhere.

    Each round opens the smallest bucket that fits the longest remaining
    document (the largest bucket if none fits, in which case the document's
    prefix fills it entirely and the remainder re-enters the pool). The
    remaining documents are swept in descending order, placing every one that
    fits. Leftover space larger than the padding threshold is filled with a
    prefix chunk of the shortest remaining document; smaller leftovers are
    padded, as is any leftover once no other document remains. Ties in length
    break by ascending document id.
    """
    if not docs.docs:
        raise ValueError("greedy packing requires a non-empty corpus")
    pool = _SortedPool(docs.docs)
    threshold = config.padding_threshold
    samples: list[PackedSample] = []
    while pool:
        top = pool.longest()
        top_length = pool.length_at(top)
        capacity = select_bucket(top_length, config)
        segments: list[Segment] = []
        if top_length > capacity:
            # Oversized document: its prefix fills the bucket exactly.
            segments.append(pool.take_prefix(top, capacity))
            pad = 0
        else:
            space = capacity
            while space > 0 and pool:
                pos = pool.longest_fitting(space)
                if pos is None:
                    break
                space -= pool.length_at(pos)
                segments.append(pool.take_whole(pos))
            if space == 0:
                pad = 0
            elif pool and space / capacity > threshold:
                # Every remaining document is longer than the hole, so this is
                # always a proper prefix chunk.
                segments.append(pool.take_prefix(pool.shortest(), space))
                pad = 0
            else:
                pad = space
        samples.append(PackedSample(capacity, tuple(segments), pad))
    return PackedDataset(
        samples=tuple(samples),
        source=SourceInfo(len(docs.docs), docs.total_tokens),
        strategy={
            "name": "greedy",
            "capacities": list(config.capacities),
            "pad_threshold": config.padding_threshold,
        },
    )


def unpack(packed: PackedDataset, docs: DocumentSet) -> DocumentSet:
    """Reassemble the corpus from a packing and verify exact coverage.

    Raises when the packing does not match the corpus identity, references an
    unknown document, or leaves a gap or an overlap in any document's token
    span. Returns a DocumentSet equal to the input (tokens included when the
    corpus carries them).
    """
    if packed.source.num_docs != len(docs.docs) or packed.source.total_tokens != docs.total_tokens:
        raise ValueError(
            "packing source does not match corpus identity "
            f"({packed.source.num_docs} docs / {packed.source.total_tokens} tokens vs "
            f"{len(docs.docs)} docs / {docs.total_tokens} tokens)"
        )
    segments: dict[str, list[Segment]] = {}
    for sample in packed.samples:
        for seg in sample.segments:
            segments.setdefault(seg.doc_id, []).append(seg)
    unknown = set(segments) - set(docs.by_id)
    if unknown:
        raise ValueError(f"segments reference unknown documents: {sorted(unknown)[:3]}")
    rebuilt: list[Document] = []
    for doc in docs.docs:
        spans = sorted(segments.get(doc.id, []), key=lambda s: s.start)
        pos = 0
        pieces: list[tuple[int, ...]] = []
        for seg in spans:
            if seg.start > pos:
                raise ValueError(f"gap in document {doc.id!r}: offsets [{pos}, {seg.start}) missing")
            if seg.start < pos:
                raise ValueError(f"overlap in document {doc.id!r} at offset {seg.start}")
            if doc.tokens is not None:
                pieces.append(doc.tokens[seg.start:seg.end])
            pos = seg.end
        if pos != doc.length:
            raise ValueError(f"gap in document {doc.id!r}: offsets [{pos}, {doc.length}) missing")
        tokens = tuple(t for piece in pieces for t in piece) if doc.tokens is not None else None
        rebuilt.append(Document(id=doc.id, length=doc.length, tokens=tokens))
    return DocumentSet(docs=tuple(rebuilt), eos_id=docs.eos_id, pad_id=docs.pad_id)


def sample_tokens(sample: PackedSample, docs: DocumentSet) -> list[int]:
    """Materialize one sample's token payload, pad id filling the tail."""
    out: list[int] = []
    for seg in sample.segments:
        doc = docs.by_id[seg.doc_id]
        if doc.tokens is None:
            raise ValueError(f"document {seg.doc_id!r} has no token payload")
        out.extend(doc.tokens[seg.start:seg.end])
    out.extend([docs.pad_id] * sample.pad_count)
    return out


def write_samples_jsonl(
    packed: PackedDataset,
    path: str | Path,
    docs: DocumentSet | None = None,
    emit_tokens: bool = False,
) -> None:
    """Write one sample per line: bucket capacity, segments, pad count.

    With ``emit_tokens`` (token-mode corpora only) each line also carries the
    materialized token payload including the padded tail.
    """
    if emit_tokens and docs is None:
        raise ValueError("emit_tokens requires the source corpus")
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for sample in packed.samples:
            record: dict = {
                "bucket": sample.capacity,
                "segments": [
                    {"doc": seg.doc_id, "start": seg.start, "end": seg.end}
                    for seg in sample.segments
                ],
                "pad": sample.pad_count,
            }
            if emit_tokens:
                record["tokens"] = sample_tokens(sample, docs)
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def read_samples_jsonl(path: str | Path, source: SourceInfo, strategy: dict | None = None) -> PackedDataset:
    """Read a samples file back into a PackedDataset (token payloads ignored)."""
    path = Path(path)
    samples: list[PackedSample] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed sample: {exc}") from exc
            segments = tuple(
                Segment(s["doc"], s["start"], s["end"]) for s in record["segments"]
            )
            samples.append(PackedSample(record["bucket"], segments, record["pad"]))
    return PackedDataset(samples=tuple(samples), source=source, strategy=strategy or {})
