"""Corpus ingestion, synthetic generation, and length statistics.

A Document is the unit of packing and of truncation accounting: an id plus a
token sequence, or just a token count when payloads are not needed. The
end-of-document policy lives entirely in this module: with ``append_eos=True``
(the default) every ingested document grows by one trailing EOS token, so the
packers downstream can treat lengths as opaque and stay comparable across
strategies.

Length-only mode is first class. Packing decisions depend only on lengths, so
metric experiments never need token payloads; token mode exists for exact
round-trip verification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

DEFAULT_PAD_ID = 0
DEFAULT_EOS_ID = 1

# Default synthetic shape: web-style corpora are short-document heavy, with
# the bulk of the mass under 2048 tokens.
DEFAULT_LOG_MEAN = math.log(400.0)
DEFAULT_LOG_SIGMA = 1.0
DEFAULT_MIN_LEN = 1
DEFAULT_MAX_LEN = 65536

CORPUS_FORMATS = ("lengths-jsonl", "tokens-jsonl")


@dataclass(frozen=True)
class Document:
    """One corpus item: unique id plus a token sequence or a bare length."""

    id: str
    length: int
    tokens: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError(f"zero-length document {self.id!r}")
        if self.tokens is not None and len(self.tokens) != self.length:
            raise ValueError(
                f"document {self.id!r}: length {self.length} does not match "
                f"{len(self.tokens)} tokens"
            )


@dataclass(frozen=True)
class DocumentSet:
    """An ordered, immutable collection of documents plus the special token ids."""

    docs: tuple[Document, ...]
    eos_id: int = DEFAULT_EOS_ID
    pad_id: int = DEFAULT_PAD_ID

    def __post_init__(self) -> None:
        if self.eos_id == self.pad_id:
            raise ValueError("eos_id and pad_id must differ")
        seen: set[str] = set()
        for doc in self.docs:
            if doc.id in seen:
                raise ValueError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)

    def __len__(self) -> int:
        return len(self.docs)

    @cached_property
    def total_tokens(self) -> int:
        return sum(doc.length for doc in self.docs)

    @cached_property
    def by_id(self) -> dict[str, Document]:
        return {doc.id: doc for doc in self.docs}

    def lengths(self) -> list[int]:
        return [doc.length for doc in self.docs]


@dataclass(frozen=True)
class DistributionSpec:
    """Parametric length distribution for synthetic corpora.

    ``components`` holds (log_mean, log_sigma, weight) triples; a single
    component is a plain lognormal, several form a mixture. Lengths are drawn,
    rounded to integers, and clamped to [min_len, max_len].
    """

    family: str = "lognormal"
    components: tuple[tuple[float, float, float], ...] = (
        (DEFAULT_LOG_MEAN, DEFAULT_LOG_SIGMA, 1.0),
    )
    min_len: int = DEFAULT_MIN_LEN
    max_len: int = DEFAULT_MAX_LEN
    count: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in ("lognormal", "mixture-of-lognormals"):
            raise ValueError(f"unknown distribution family {self.family!r}")
        if self.family == "lognormal" and len(self.components) != 1:
            raise ValueError("family 'lognormal' takes exactly one component")
        if not self.components:
            raise ValueError("at least one mixture component is required")
        if any(sigma <= 0 for _, sigma, _ in self.components):
            raise ValueError("component log_sigma must be positive")
        if any(weight < 0 for _, _, weight in self.components):
            raise ValueError("component weights must be non-negative")
        total = sum(weight for _, _, weight in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")
        if self.max_len < self.min_len:
            raise ValueError("max_len must be >= min_len")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def default_spec(count: int = 10_000, seed: int = 0) -> DistributionSpec:
    """The default web-shaped synthetic corpus spec."""
    return DistributionSpec(count=count, seed=seed)


@dataclass(frozen=True)
class Histogram:
    """Document-length histogram over half-open bins [edge[k], edge[k+1])."""

    bin_edges: tuple[int, ...]
    counts: tuple[int, ...]
    fraction_below: tuple[float, ...]
    underflow: int
    overflow: int

    @property
    def total(self) -> int:
        return sum(self.counts) + self.underflow + self.overflow


def load_documents(
    path: str | Path,
    format: str = "lengths-jsonl",
    append_eos: bool = True,
    eos_id: int = DEFAULT_EOS_ID,
    pad_id: int = DEFAULT_PAD_ID,
    validate_special: bool = True,
) -> DocumentSet:
    """Load a JSONL corpus in file order.

    ``lengths-jsonl`` records carry ``id`` and ``len``; ``tokens-jsonl``
    records carry ``id`` and ``tokens``. With ``append_eos`` every document is
    extended by one EOS token (appended literally in token mode). In token
    mode with ``validate_special`` the body tokens may not contain the pad or
    EOS ids.
    """
    if format not in CORPUS_FORMATS:
        raise ValueError(f"unknown corpus format {format!r}")
    path = Path(path)
    docs: list[Document] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(record, dict) or "id" not in record:
                raise ValueError(f"{path}:{lineno}: malformed record: missing 'id'")
            doc_id = str(record["id"])
            if format == "lengths-jsonl":
                if "len" not in record:
                    raise ValueError(f"{path}:{lineno}: malformed record: missing 'len'")
                length = record["len"]
                if not isinstance(length, int) or isinstance(length, bool):
                    raise ValueError(f"{path}:{lineno}: 'len' must be an integer")
                if length < 1:
                    raise ValueError(f"{path}:{lineno}: zero-length document {doc_id!r}")
                if append_eos:
                    length += 1
                docs.append(Document(id=doc_id, length=length))
            else:
                if "tokens" not in record:
                    raise ValueError(f"{path}:{lineno}: malformed record: missing 'tokens'")
                tokens = record["tokens"]
                if not isinstance(tokens, list) or any(
                    not isinstance(t, int) or isinstance(t, bool) or t < 0 for t in tokens
                ):
                    raise ValueError(
                        f"{path}:{lineno}: 'tokens' must be a list of non-negative integers"
                    )
                if not tokens:
                    raise ValueError(f"{path}:{lineno}: zero-length document {doc_id!r}")
                if validate_special:
                    for special, name in ((pad_id, "pad_id"), (eos_id, "eos_id")):
                        if special in tokens:
                            raise ValueError(
                                f"{path}:{lineno}: document {doc_id!r} contains "
                                f"reserved {name} {special}"
                            )
                body = list(tokens)
                if append_eos:
                    body.append(eos_id)
                docs.append(Document(id=doc_id, length=len(body), tokens=tuple(body)))
    return DocumentSet(docs=tuple(docs), eos_id=eos_id, pad_id=pad_id)


def write_documents(docs: DocumentSet, path: str | Path, format: str = "lengths-jsonl") -> None:
    """Write a corpus as newline-delimited JSON, one document per line."""
    if format not in CORPUS_FORMATS:
        raise ValueError(f"unknown corpus format {format!r}")
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for doc in docs.docs:
            if format == "lengths-jsonl":
                record: dict = {"id": doc.id, "len": doc.length}
            else:
                if doc.tokens is None:
                    raise ValueError(
                        f"document {doc.id!r} has no token payload; cannot write tokens-jsonl"
                    )
                record = {"id": doc.id, "tokens": list(doc.tokens)}
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def generate_synthetic(spec: DistributionSpec) -> DocumentSet:
    """Draw a deterministic synthetic corpus from a length distribution.

    Pure function of the spec including its seed: the same spec always yields
    the identical DocumentSet. Ids are zero-padded sequence numbers, so
    lexicographic and numeric order agree.
    """
    if spec.count == 0:
        return DocumentSet(docs=())
    rng = np.random.default_rng(spec.seed)
    log_means = np.array([c[0] for c in spec.components])
    log_sigmas = np.array([c[1] for c in spec.components])
    weights = np.array([c[2] for c in spec.components])
    if len(spec.components) == 1:
        component = np.zeros(spec.count, dtype=np.int64)
    else:
        component = rng.choice(len(spec.components), size=spec.count, p=weights / weights.sum())
    draws = rng.lognormal(mean=log_means[component], sigma=log_sigmas[component])
    lengths = np.clip(np.rint(draws).astype(np.int64), spec.min_len, spec.max_len)
    width = max(8, len(str(spec.count - 1)))
    docs = tuple(
        Document(id=f"{i:0{width}d}", length=int(length))
        for i, length in enumerate(lengths)
    )
    return DocumentSet(docs=docs)


def length_histogram(docs: DocumentSet, bin_edges: tuple[int, ...] | list[int]) -> Histogram:
    """Bin document lengths into half-open intervals between ascending edges.

    Documents below the first edge land in ``underflow``, documents at or
    above the last edge in ``overflow``, so counts always sum back to the
    document total. ``fraction_below[k]`` is the fraction of documents
    strictly shorter than ``bin_edges[k]``.
    """
    edges = tuple(int(e) for e in bin_edges)
    if len(edges) < 2:
        raise ValueError("need at least 2 bin edges")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly ascending")
    lengths = np.array(docs.lengths(), dtype=np.int64)
    n = len(lengths)
    if n == 0:
        zeros = tuple(0 for _ in edges[:-1])
        return Histogram(edges, zeros, tuple(0.0 for _ in edges), 0, 0)
    idx = np.searchsorted(edges, lengths, side="right") - 1
    underflow = int(np.count_nonzero(idx < 0))
    overflow = int(np.count_nonzero(idx >= len(edges) - 1))
    in_range = idx[(idx >= 0) & (idx < len(edges) - 1)]
    counts = np.bincount(in_range, minlength=len(edges) - 1)
    sorted_lengths = np.sort(lengths)
    below = np.searchsorted(sorted_lengths, edges, side="left") / n
    return Histogram(
        bin_edges=edges,
        counts=tuple(int(c) for c in counts),
        fraction_below=tuple(float(f) for f in below),
        underflow=underflow,
        overflow=overflow,
    )
