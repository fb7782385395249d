"""Comparison reports and figure rendering.

The comparison runs all six strategies over one corpus: the fixed-length
packer at each requested length, the naive length-partitioned baseline, and
the greedy bucket composer. Seed-dependent strategies are averaged over the
requested seeds; the greedy packer takes none. Ratios stay exact rationals in
the JSON output and are rendered to 4 significant digits in CSV.

Figures are written next to the delimited output: a length histogram for
corpus stats, a three-panel ratio chart for comparisons, and a per-bucket
speed chart for throughput reports. matplotlib is imported lazily so the
non-plotting paths never pay for it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .corpus import DocumentSet, Histogram
from .metrics import MetricsReport, evaluate
from .packing import BucketConfig, pack_fixed, pack_greedy_buckets, pack_naive_buckets
from .scheduler import ThroughputReport

COMPARE_COLUMNS = ("strategy", "r_pad", "r_tru", "r_cat", "M", "C", "total_pad")


@dataclass(frozen=True)
class CompareRow:
    """One strategy's metrics, averaged over seeds where the strategy uses one."""

    strategy: str
    r_pad: Fraction
    r_tru: Fraction
    r_cat: Fraction
    num_docs: int
    num_samples: Fraction
    total_pad: Fraction
    seeds: tuple[int, ...]


def _mean(values: list[Fraction]) -> Fraction:
    return sum(values, Fraction(0)) / len(values)


def _average_reports(strategy: str, reports: list[MetricsReport], seeds: tuple[int, ...]) -> CompareRow:
    return CompareRow(
        strategy=strategy,
        r_pad=_mean([r.r_pad for r in reports]),
        r_tru=_mean([r.r_tru for r in reports]),
        r_cat=_mean([r.r_cat for r in reports]),
        num_docs=reports[0].num_docs,
        num_samples=_mean([Fraction(r.num_samples) for r in reports]),
        total_pad=_mean([Fraction(r.total_pad) for r in reports]),
        seeds=seeds,
    )


def run_comparison(
    docs: DocumentSet,
    config: BucketConfig,
    fixed_lengths: tuple[int, ...] = (2048, 4096, 8192, 16384),
    seeds: tuple[int, ...] = (0,),
) -> list[CompareRow]:
    """Pack the corpus with every strategy and collect one row per strategy."""
    if not seeds:
        raise ValueError("at least one seed is required")
    rows: list[CompareRow] = []
    for length in fixed_lengths:
        reports = [evaluate(pack_fixed(docs, length, seed)) for seed in seeds]
        rows.append(_average_reports(f"fixed-{length}", reports, tuple(seeds)))
    naive_reports = [evaluate(pack_naive_buckets(docs, config, seed)) for seed in seeds]
    rows.append(_average_reports("naive-bucket", naive_reports, tuple(seeds)))
    greedy_report = evaluate(pack_greedy_buckets(docs, config))
    rows.append(_average_reports("greedy-bucket", [greedy_report], ()))
    return rows


def _sig4(value: Fraction) -> str:
    return f"{float(value):.4g}"


def write_compare_csv(rows: list[CompareRow], path: str | Path) -> None:
    """One row per strategy, ratios at 4 significant digits."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(COMPARE_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.strategy,
                    _sig4(row.r_pad),
                    _sig4(row.r_tru),
                    _sig4(row.r_cat),
                    row.num_docs,
                    _sig4(row.num_samples),
                    _sig4(row.total_pad),
                ]
            )


def compare_rows_to_json_obj(rows: list[CompareRow]) -> list[dict]:
    """Full-precision form: floats plus exact numerator/denominator strings."""
    out = []
    for row in rows:
        out.append(
            {
                "strategy": row.strategy,
                "r_pad": float(row.r_pad),
                "r_pad_exact": str(row.r_pad),
                "r_tru": float(row.r_tru),
                "r_tru_exact": str(row.r_tru),
                "r_cat": float(row.r_cat),
                "r_cat_exact": str(row.r_cat),
                "M": row.num_docs,
                "C": float(row.num_samples),
                "C_exact": str(row.num_samples),
                "total_pad": float(row.total_pad),
                "total_pad_exact": str(row.total_pad),
                "seeds": list(row.seeds),
            }
        )
    return out


def write_compare_json(rows: list[CompareRow], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        json.dump(compare_rows_to_json_obj(rows), handle, indent=2, sort_keys=True)
        handle.write("\n")


def metrics_to_json_obj(report: MetricsReport) -> dict:
    return {
        "r_pad": float(report.r_pad),
        "r_pad_exact": str(report.r_pad),
        "r_tru": float(report.r_tru),
        "r_tru_exact": str(report.r_tru),
        "r_cat": float(report.r_cat),
        "r_cat_exact": str(report.r_cat),
        "M": report.num_docs,
        "C": report.num_samples,
        "total_pad": report.total_pad,
        "total_len": report.total_len,
        "truncated_docs": report.truncated_docs,
    }


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_length_histogram(hist: Histogram, path: str | Path, title: str = "Document length distribution") -> None:
    """Bar chart of the length histogram on a log-x axis."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    lefts = hist.bin_edges[:-1]
    widths = [b - a for a, b in zip(hist.bin_edges, hist.bin_edges[1:])]
    ax.bar(lefts, hist.counts, width=widths, align="edge", color="#4C72B0",
           alpha=0.85, edgecolor="white")
    if hist.bin_edges[0] > 0:
        ax.set_xscale("log")
    ax.set_xlabel("Document length (tokens)")
    ax.set_ylabel("Documents")
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_compare(rows: list[CompareRow], path: str | Path) -> None:
    """Three-panel bar chart: one panel per ratio, one bar per strategy."""
    plt = _plt()
    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2))
    names = [r.strategy for r in rows]
    panels = (
        ("padding ratio", [float(r.r_pad) for r in rows]),
        ("truncation ratio", [float(r.r_tru) for r in rows]),
        ("concatenation ratio", [float(r.r_cat) for r in rows]),
    )
    for ax, (label, values) in zip(axes, panels):
        ax.bar(range(len(names)), values, color="#4C72B0", alpha=0.85, edgecolor="white")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_title(label)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_throughput(report: ThroughputReport, path: str | Path) -> None:
    """Per-bucket speeds relative to the reference, with the aggregate marked."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4.2))
    caps = [str(cap) for cap, _, _, _ in report.per_bucket]
    speeds = [speed for _, _, speed, _ in report.per_bucket]
    shares = [share for _, share, _, _ in report.per_bucket]
    bars = ax.bar(caps, speeds, color="#4C72B0", alpha=0.85, edgecolor="white")
    for bar, share in zip(bars, shares):
        ax.annotate(
            f"{share:.1%}",
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center", va="bottom", fontsize=8,
        )
    ax.axhline(report.aggregate_tokens_per_s, color="#C44E52", linestyle="--",
               label=f"aggregate {report.aggregate_tokens_per_s:.0f} tok/s")
    ax.axhline(report.reference_speed, color="#55A868", linestyle=":",
               label=f"reference {report.reference_speed:.0f} tok/s")
    ax.set_xlabel("Bucket capacity (tokens)")
    ax.set_ylabel("Speed (tokens/s)")
    ax.set_title("Per-bucket training speed and token share")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
