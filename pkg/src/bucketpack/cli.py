"""Command-line pipelines: synth, stats, pack, compare, schedule.

Every command writes its primary artifact plus a manifest that echoes the
tool version, the full parameter set, and a content hash of the input, so any
output can be reproduced from its manifest alone. Report commands (stats,
compare, schedule) also render a figure next to the delimited output unless
--no-plot is given.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .corpus import (
    DEFAULT_EOS_ID,
    DEFAULT_LOG_MEAN,
    DEFAULT_LOG_SIGMA,
    DEFAULT_MAX_LEN,
    DEFAULT_MIN_LEN,
    DEFAULT_PAD_ID,
    DistributionSpec,
    DocumentSet,
    generate_synthetic,
    length_histogram,
    load_documents,
    write_documents,
)
from .metrics import evaluate
from .packing import (
    BucketConfig,
    PackedDataset,
    pack_fixed,
    pack_greedy_buckets,
    pack_naive_buckets,
    write_samples_jsonl,
)
from .report import (
    compare_rows_to_json_obj,
    metrics_to_json_obj,
    plot_compare,
    plot_length_histogram,
    plot_throughput,
    run_comparison,
    write_compare_csv,
    write_compare_json,
)
from .scheduler import (
    ScheduleConfig,
    SpeedTable,
    estimate_throughput,
    plan_steps,
    plan_to_json_obj,
    throughput_to_json_obj,
)

OUTDIR_ENV = "BUCKETPACK_OUTDIR"

DEFAULT_HIST_EDGES = tuple(2**k for k in range(0, 18))


def _outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "."))


def _resolve_output(candidate: str | None, default_name: str) -> Path:
    if candidate is None:
        return _outdir() / default_name
    path = Path(candidate)
    if path.is_absolute():
        return path
    return _outdir() / path


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(obj: dict | list, path: Path) -> None:
    with path.open("w", encoding="utf-8") as handle:
        json.dump(obj, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_manifest(
    path: Path,
    command: str,
    params: dict,
    outputs: dict[str, str],
    input_path: Path | None = None,
    **extra,
) -> None:
    manifest = {
        "tool": "bucketpack",
        "version": __version__,
        "command": command,
        "params": params,
        "input": (
            {"path": str(input_path), "sha256": _sha256(input_path)}
            if input_path is not None
            else None
        ),
        "outputs": outputs,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    manifest.update(extra)
    _write_json(manifest, path)


def _parse_int_list(raw: str, flag: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ValueError(f"{flag} expects a comma-separated integer list, got {raw!r}") from exc
    if not values:
        raise ValueError(f"{flag} must not be empty")
    return values


def _detect_format(path: Path) -> str:
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            return "tokens-jsonl" if "tokens" in record else "lengths-jsonl"
    return "lengths-jsonl"


def _load_corpus(args: argparse.Namespace) -> tuple[DocumentSet, str]:
    path = Path(args.input)
    fmt = args.input_format or _detect_format(path)
    docs = load_documents(
        path,
        format=fmt,
        append_eos=args.append_eos,
        eos_id=args.eos_id,
        pad_id=args.pad_id,
    )
    return docs, fmt


def _corpus_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", help="corpus file (lengths-jsonl or tokens-jsonl)")
    parser.add_argument(
        "--input-format",
        choices=("lengths-jsonl", "tokens-jsonl"),
        default=None,
        help="corpus format (default: detected from the first record)",
    )
    parser.add_argument(
        "--append-eos",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="extend every document by one EOS token at ingestion",
    )
    parser.add_argument("--eos-id", type=int, default=DEFAULT_EOS_ID)
    parser.add_argument("--pad-id", type=int, default=DEFAULT_PAD_ID)


def _params(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    out = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return dict(sorted(out.items()))


# ── synth ────────────────────────────────────────────────────────────────


def _spec_from_args(args: argparse.Namespace) -> DistributionSpec:
    if args.component:
        components = []
        for raw in args.component:
            parts = raw.split(":")
            if len(parts) != 3:
                raise ValueError(
                    f"--component expects LOG_MEAN:LOG_SIGMA:WEIGHT, got {raw!r}"
                )
            components.append(tuple(float(p) for p in parts))
        family = "mixture-of-lognormals" if len(components) > 1 else args.family
        components = tuple(components)
    else:
        components = ((args.log_mean, args.log_sigma, 1.0),)
        family = args.family
    return DistributionSpec(
        family=family,
        components=components,
        min_len=args.min_len,
        max_len=args.max_len,
        count=args.count,
        seed=args.seed,
    )


def cmd_synth(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    docs = generate_synthetic(spec)
    out = _resolve_output(args.output, "synthetic.jsonl")
    write_documents(docs, out, format="lengths-jsonl")
    manifest_path = Path(str(out) + ".manifest.json")
    _write_manifest(
        manifest_path,
        "synth",
        _params(args),
        outputs={"corpus": str(out), "sha256": _sha256(out)},
        distribution={
            "family": spec.family,
            "components": [list(c) for c in spec.components],
            "min_len": spec.min_len,
            "max_len": spec.max_len,
            "count": spec.count,
            "seed": spec.seed,
        },
        num_docs=len(docs),
        total_tokens=docs.total_tokens,
    )
    print(f"wrote {len(docs)} documents to {out}")
    return 0


# ── stats ────────────────────────────────────────────────────────────────


def cmd_stats(args: argparse.Namespace) -> int:
    docs, fmt = _load_corpus(args)
    edges = (
        _parse_int_list(args.edges, "--edges") if args.edges else DEFAULT_HIST_EDGES
    )
    hist = length_histogram(docs, edges)
    out = _resolve_output(args.output, f"{Path(args.input).stem}.stats.{args.format}")
    if args.format == "csv":
        import csv as _csv

        with out.open("w", encoding="utf-8", newline="") as handle:
            writer = _csv.writer(handle)
            writer.writerow(["bin_start", "bin_end", "count", "fraction_below_start"])
            for i, count in enumerate(hist.counts):
                writer.writerow(
                    [hist.bin_edges[i], hist.bin_edges[i + 1], count, f"{hist.fraction_below[i]:.6f}"]
                )
    else:
        _write_json(
            {
                "bin_edges": list(hist.bin_edges),
                "counts": list(hist.counts),
                "fraction_below": list(hist.fraction_below),
                "underflow": hist.underflow,
                "overflow": hist.overflow,
                "num_docs": len(docs),
                "total_tokens": docs.total_tokens,
            },
            out,
        )
    outputs = {"histogram": str(out)}
    if args.plot:
        figure = out.with_suffix(".png")
        plot_length_histogram(hist, figure)
        outputs["figure"] = str(figure)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        "stats",
        _params(args),
        outputs=outputs,
        input_path=Path(args.input),
        corpus_format=fmt,
        num_docs=len(docs),
        total_tokens=docs.total_tokens,
    )
    print(f"wrote histogram ({len(hist.counts)} bins) to {out}")
    return 0


# ── pack ─────────────────────────────────────────────────────────────────


def _pack_with_strategy(docs: DocumentSet, args: argparse.Namespace) -> PackedDataset:
    if args.strategy == "fixed":
        if args.length is None:
            raise ValueError("--strategy fixed requires --length")
        return pack_fixed(docs, args.length, args.seed)
    if args.buckets is None:
        raise ValueError(f"--strategy {args.strategy} requires --buckets")
    config = BucketConfig(
        capacities=_parse_int_list(args.buckets, "--buckets"),
        padding_threshold=args.pad_threshold,
    )
    if args.strategy == "naive":
        return pack_naive_buckets(docs, config, args.seed)
    if args.strategy == "greedy":
        return pack_greedy_buckets(docs, config)
    raise ValueError(f"unknown strategy {args.strategy!r}")


def cmd_pack(args: argparse.Namespace) -> int:
    docs, fmt = _load_corpus(args)
    packed = _pack_with_strategy(docs, args)
    report = evaluate(packed)
    out = _resolve_output(
        args.output, f"{Path(args.input).stem}.{args.strategy}.samples.jsonl"
    )
    emit_tokens = args.emit_tokens
    if emit_tokens and fmt != "tokens-jsonl":
        raise ValueError("--emit-tokens requires a tokens-jsonl corpus")
    write_samples_jsonl(packed, out, docs=docs, emit_tokens=emit_tokens)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        "pack",
        _params(args),
        outputs={"samples": str(out), "sha256": _sha256(out)},
        input_path=Path(args.input),
        corpus_format=fmt,
        strategy=packed.strategy,
        source={"num_docs": packed.source.num_docs, "total_tokens": packed.source.total_tokens},
        num_samples=len(packed.samples),
        per_bucket_counts={str(cap): n for cap, n in packed.per_bucket_counts().items()},
        metrics=metrics_to_json_obj(report),
    )
    print(
        f"packed {packed.source.num_docs} documents into {len(packed.samples)} samples "
        f"(r_pad={float(report.r_pad):.4g}, r_tru={float(report.r_tru):.4g}, "
        f"r_cat={float(report.r_cat):.4g})"
    )
    return 0


# ── compare ──────────────────────────────────────────────────────────────


def cmd_compare(args: argparse.Namespace) -> int:
    docs, fmt = _load_corpus(args)
    config = BucketConfig(
        capacities=_parse_int_list(args.buckets, "--buckets"),
        padding_threshold=args.pad_threshold,
    )
    lengths = _parse_int_list(args.lengths, "--lengths")
    if args.seeds < 1:
        raise ValueError("--seeds must be >= 1")
    seeds = tuple(args.seed + i for i in range(args.seeds))
    rows = run_comparison(docs, config, fixed_lengths=lengths, seeds=seeds)
    out = _resolve_output(args.output, f"{Path(args.input).stem}.compare.{args.format}")
    if args.format == "csv":
        write_compare_csv(rows, out)
    else:
        write_compare_json(rows, out)
    outputs = {"table": str(out)}
    if args.plot:
        figure = out.with_suffix(".png")
        plot_compare(rows, figure)
        outputs["figure"] = str(figure)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        "compare",
        _params(args),
        outputs=outputs,
        input_path=Path(args.input),
        corpus_format=fmt,
        rows=compare_rows_to_json_obj(rows),
    )
    print(f"wrote comparison of {len(rows)} strategies to {out}")
    return 0


# ── schedule ─────────────────────────────────────────────────────────────


def _shares_from_counts(per_bucket_counts: dict[int, int]) -> dict[int, float]:
    total = sum(cap * n for cap, n in per_bucket_counts.items())
    if total == 0:
        raise ValueError("packing manifest reports zero total capacity")
    return {cap: float(Fraction(cap * n, total)) for cap, n in per_bucket_counts.items()}


def cmd_schedule(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    with manifest_path.open("r", encoding="utf-8") as handle:
        pack_manifest = json.load(handle)
    if "per_bucket_counts" not in pack_manifest:
        raise ValueError(f"{manifest_path} is not a packing manifest (no per_bucket_counts)")
    counts = {int(cap): int(n) for cap, n in pack_manifest["per_bucket_counts"].items()}
    config = ScheduleConfig(
        reference_capacity=args.ref_capacity,
        reference_batch=args.ref_batch,
        world_size=args.world_size,
        seed=args.seed,
        leftover_policy=args.policy,
    )
    speeds = SpeedTable.from_json(args.speed_table)
    plan = plan_steps(counts, config)
    shares = _shares_from_counts(counts)
    report = estimate_throughput(shares, speeds, reference=args.ref_capacity)
    out = _resolve_output(args.output, f"{manifest_path.stem}.plan.json")
    _write_json(plan_to_json_obj(plan, config), out)
    throughput_path = Path(str(out)[: -len(".json")] + ".throughput.json") if str(out).endswith(
        ".json"
    ) else Path(str(out) + ".throughput.json")
    _write_json(throughput_to_json_obj(report), throughput_path)
    outputs = {"plan": str(out), "throughput": str(throughput_path)}
    if args.plot:
        figure = throughput_path.with_suffix(".png")
        plot_throughput(report, figure)
        outputs["figure"] = str(figure)
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        "schedule",
        _params(args),
        outputs=outputs,
        input_path=manifest_path,
        per_bucket_counts={str(cap): n for cap, n in sorted(counts.items())},
        token_shares={str(cap): share for cap, share in sorted(shares.items())},
        aggregate_tokens_per_s=report.aggregate_tokens_per_s,
    )
    print(
        f"planned {len(plan.steps)} steps at {plan.tokens_per_step} tokens/step; "
        f"estimated {report.aggregate_tokens_per_s:.0f} tokens/s "
        f"({report.speedup_vs_reference:+.1%} vs reference)"
    )
    return 0


# ── parser ───────────────────────────────────────────────────────────────


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors: exit 1, not argparse's default 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bucketpack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bucketpack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_synth = sub.add_parser("synth", help="generate a synthetic lengths-jsonl corpus")
    p_synth.add_argument("--family", choices=("lognormal", "mixture-of-lognormals"),
                         default="lognormal")
    p_synth.add_argument("--count", type=int, default=10_000)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--log-mean", type=float, default=DEFAULT_LOG_MEAN,
                         help=f"log-space mean (default ln 400 = {DEFAULT_LOG_MEAN:.4f})")
    p_synth.add_argument("--log-sigma", type=float, default=DEFAULT_LOG_SIGMA)
    p_synth.add_argument("--component", action="append", default=None,
                         metavar="LOG_MEAN:LOG_SIGMA:WEIGHT",
                         help="mixture component; repeat for several")
    p_synth.add_argument("--min-len", type=int, default=DEFAULT_MIN_LEN)
    p_synth.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p_synth.add_argument("-o", "--output", default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_stats = sub.add_parser("stats", help="dump a document-length histogram")
    _corpus_args(p_stats)
    p_stats.add_argument("--edges", default=None,
                         help="comma-separated ascending bin edges (default: powers of two)")
    p_stats.add_argument("--format", choices=("csv", "json"), default="csv")
    p_stats.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p_stats.add_argument("-o", "--output", default=None)
    p_stats.set_defaults(func=cmd_stats)

    p_pack = sub.add_parser("pack", help="pack a corpus into training samples")
    _corpus_args(p_pack)
    p_pack.add_argument("--strategy", choices=("fixed", "naive", "greedy"), required=True)
    p_pack.add_argument("--length", type=int, default=None, help="sample length for --strategy fixed")
    p_pack.add_argument("--buckets", default=None,
                        help="comma-separated ascending capacities for naive/greedy")
    p_pack.add_argument("--pad-threshold", type=float, default=0.01,
                        help="per-sample padding budget for --strategy greedy")
    p_pack.add_argument("--seed", type=int, default=0,
                        help="shuffle seed (fixed and naive; greedy is deterministic)")
    p_pack.add_argument("--emit-tokens", action="store_true",
                        help="write token payloads into the samples file (token mode)")
    p_pack.add_argument("-o", "--output", default=None)
    p_pack.set_defaults(func=cmd_pack)

    p_cmp = sub.add_parser("compare", help="score all strategies on one corpus")
    _corpus_args(p_cmp)
    p_cmp.add_argument("--lengths", default="2048,4096,8192,16384",
                       help="fixed-length strategies to include")
    p_cmp.add_argument("--buckets", default="2048,4096,8192,16384")
    p_cmp.add_argument("--pad-threshold", type=float, default=0.01)
    p_cmp.add_argument("--seeds", type=int, default=3,
                       help="number of seeds to average seed-dependent strategies over")
    p_cmp.add_argument("--seed", type=int, default=0, help="base seed")
    p_cmp.add_argument("--format", choices=("csv", "json"), default="csv")
    p_cmp.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p_cmp.add_argument("-o", "--output", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_sched = sub.add_parser("schedule", help="plan bucketed training steps from a pack manifest")
    p_sched.add_argument("--manifest", required=True, help="manifest written by `pack`")
    p_sched.add_argument("--speed-table", required=True,
                         help="JSON map of capacity to tokens/s")
    p_sched.add_argument("--world-size", type=int, default=1)
    p_sched.add_argument("--ref-capacity", type=int, default=2048)
    p_sched.add_argument("--ref-batch", type=int, default=24)
    p_sched.add_argument("--seed", type=int, default=0)
    p_sched.add_argument("--policy", choices=("drop", "pad-batch"), default="drop")
    p_sched.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p_sched.add_argument("-o", "--output", default=None)
    p_sched.set_defaults(func=cmd_schedule)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
