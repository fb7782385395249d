"""Bucket-aware distributed-training step plans and throughput estimates.

Every global step draws all ranks' batches from a single bucket, with the
per-rank batch size scaled so that capacity x batch x world size stays at the
constant token budget set by the reference bucket. Throughput is composed
from an externally measured per-bucket speed table: total time is the sum of
per-bucket token shares over speeds, so the aggregate is the share-weighted
harmonic mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LEFTOVER_POLICIES = ("drop", "pad-batch")


@dataclass(frozen=True)
class ScheduleConfig:
    """Token budget and layout of a bucketed training run.

    The global token budget per step is reference_capacity x reference_batch
    x world_size; every bucket's per-rank batch size is derived from it.
    """

    reference_capacity: int = 2048
    reference_batch: int = 24
    world_size: int = 1
    seed: int = 0
    leftover_policy: str = "drop"

    def __post_init__(self) -> None:
        if self.reference_capacity < 1:
            raise ValueError("reference_capacity must be >= 1")
        if self.reference_batch < 1:
            raise ValueError("reference_batch must be >= 1")
        if self.world_size < 1:
            raise ValueError("world_size must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.leftover_policy not in LEFTOVER_POLICIES:
            raise ValueError(f"leftover_policy must be one of {LEFTOVER_POLICIES}")

    @property
    def tokens_per_step(self) -> int:
        return self.reference_capacity * self.reference_batch * self.world_size


@dataclass(frozen=True)
class PlanStep:
    """One global step: a single bucket and per-rank sample index lists."""

    bucket: int
    per_rank: tuple[tuple[int, ...], ...]
    padded_duplicates: int = 0


@dataclass(frozen=True)
class SchedulePlan:
    """Ordered steps plus per-bucket consumption accounting."""

    steps: tuple[PlanStep, ...]
    tokens_per_step: int
    consumed: dict[int, int] = field(default_factory=dict)
    dropped: dict[int, int] = field(default_factory=dict)
    duplicated: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class SpeedTable:
    """Per-capacity training speed in tokens per second (an input, not a measurement)."""

    speeds: dict[int, float]

    def __post_init__(self) -> None:
        if any(v <= 0 for v in self.speeds.values()):
            raise ValueError("speeds must be positive")

    def for_capacity(self, capacity: int) -> float:
        if capacity not in self.speeds:
            raise ValueError(f"no speed entry for capacity {capacity}")
        return self.speeds[capacity]

    @classmethod
    def from_json(cls, path: str | Path) -> "SpeedTable":
        with Path(path).open("r", encoding="utf-8") as handle:
            raw = json.load(handle)
        return cls({int(cap): float(speed) for cap, speed in raw.items()})


@dataclass(frozen=True)
class ThroughputReport:
    """Aggregate tokens/s plus per-bucket speeds relative to a reference."""

    aggregate_tokens_per_s: float
    reference_capacity: int
    reference_speed: float
    speedup_vs_reference: float
    per_bucket: tuple[tuple[int, float, float, float], ...]
    # per_bucket rows: (capacity, token share, speed, relative speed vs reference)


def batch_size_for(capacity: int, config: ScheduleConfig) -> int:
    """Per-rank batch size keeping the token budget constant at this capacity."""
    budget = config.reference_capacity * config.reference_batch
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if budget % capacity != 0:
        raise ValueError(
            f"token budget {budget} is not divisible by capacity {capacity}; "
            "this bucket set cannot hold the batch budget constant"
        )
    return budget // capacity


def plan_steps(per_bucket_counts: dict[int, int], config: ScheduleConfig) -> SchedulePlan:
    """Build the full step plan for one epoch over the packed samples.

    Each bucket contributes floor(count / global_batch) full steps; the step
    order is a seeded uniform shuffle of all steps. Leftover samples that do
    not fill a global batch are dropped, or, under the pad-batch policy, the
    final step is filled by cycling over the bucket's leftover samples (the
    duplicates are flagged). Sample indices are per bucket, 0-based in the
    bucket's own sample order.
    """
    if config.reference_capacity not in per_bucket_counts:
        raise ValueError(
            f"reference capacity {config.reference_capacity} is not among the "
            f"bucket capacities {sorted(per_bucket_counts)}"
        )
    world = config.world_size
    entries: list[tuple[int, int]] = []
    batch_for: dict[int, int] = {}
    consumed: dict[int, int] = {}
    dropped: dict[int, int] = {}
    duplicated: dict[int, int] = {}
    for cap in sorted(per_bucket_counts):
        count = per_bucket_counts[cap]
        if count < 0:
            raise ValueError("sample counts must be >= 0")
        batch = batch_size_for(cap, config)
        batch_for[cap] = batch
        global_batch = batch * world
        full = count // global_batch
        leftover = count - full * global_batch
        steps_n = full
        if leftover and config.leftover_policy == "pad-batch":
            steps_n += 1
            consumed[cap] = count
            dropped[cap] = 0
            duplicated[cap] = global_batch - leftover
        else:
            consumed[cap] = full * global_batch
            dropped[cap] = leftover
            duplicated[cap] = 0
        entries.extend((cap, k) for k in range(steps_n))
    order = np.random.default_rng(config.seed).permutation(len(entries))
    steps: list[PlanStep] = []
    for pos in order:
        cap, k = entries[int(pos)]
        batch = batch_for[cap]
        global_batch = batch * world
        start = k * global_batch
        stop = min(start + global_batch, per_bucket_counts[cap])
        indices = list(range(start, stop))
        padded = global_batch - len(indices)
        if padded:
            indices.extend(indices[i % len(indices)] for i in range(padded))
        per_rank = tuple(
            tuple(indices[r * batch:(r + 1) * batch]) for r in range(world)
        )
        steps.append(PlanStep(bucket=cap, per_rank=per_rank, padded_duplicates=padded))
    return SchedulePlan(
        steps=tuple(steps),
        tokens_per_step=config.tokens_per_step,
        consumed=consumed,
        dropped=dropped,
        duplicated=duplicated,
    )


def estimate_throughput(
    token_shares: dict[int, float],
    speeds: SpeedTable,
    reference: int,
) -> ThroughputReport:
    """Aggregate tokens/s over a token-share vector, harmonically composed.

    Shares must sum to 1 within 1e-3 (hand-entered tables arrive rounded);
    they are renormalized before weighting so the aggregate always lies
    between the slowest and fastest bucket speed.
    """
    if not token_shares:
        raise ValueError("token_shares must be non-empty")
    total = sum(token_shares.values())
    if any(v < 0 for v in token_shares.values()):
        raise ValueError("token shares must be non-negative")
    if abs(total - 1.0) > 1e-3:
        raise ValueError(f"token shares must sum to 1, got {total}")
    reference_speed = speeds.for_capacity(reference)
    denom = 0.0
    rows: list[tuple[int, float, float, float]] = []
    for cap in sorted(token_shares):
        share = token_shares[cap] / total
        speed = speeds.for_capacity(cap)
        denom += share / speed
        rows.append((cap, share, speed, speed / reference_speed - 1.0))
    aggregate = 1.0 / denom
    return ThroughputReport(
        aggregate_tokens_per_s=aggregate,
        reference_capacity=reference,
        reference_speed=reference_speed,
        speedup_vs_reference=aggregate / reference_speed - 1.0,
        per_bucket=tuple(rows),
    )


def plan_to_json_obj(plan: SchedulePlan, config: ScheduleConfig) -> dict:
    """Serializable form of a plan: config echo, step list, leftover summary."""
    return {
        "config": {
            "reference_capacity": config.reference_capacity,
            "reference_batch": config.reference_batch,
            "world_size": config.world_size,
            "seed": config.seed,
            "leftover_policy": config.leftover_policy,
        },
        "tokens_per_step": plan.tokens_per_step,
        "num_steps": len(plan.steps),
        "steps": [
            {
                "step": i,
                "bucket": step.bucket,
                "per_rank": [list(rank) for rank in step.per_rank],
                "padded_duplicates": step.padded_duplicates,
            }
            for i, step in enumerate(plan.steps)
        ],
        "consumed": {str(cap): n for cap, n in sorted(plan.consumed.items())},
        "dropped": {str(cap): n for cap, n in sorted(plan.dropped.items())},
        "duplicated": {str(cap): n for cap, n in sorted(plan.duplicated.items())},
    }


def throughput_to_json_obj(report: ThroughputReport) -> dict:
    return {
        "aggregate_tokens_per_s": report.aggregate_tokens_per_s,
        "reference_capacity": report.reference_capacity,
        "reference_speed": report.reference_speed,
        "speedup_vs_reference": report.speedup_vs_reference,
        "per_bucket": [
            {
                "capacity": cap,
                "token_share": share,
                "speed": speed,
                "relative_speed_vs_reference": rel,
            }
            for cap, share, speed, rel in report.per_bucket
        ],
    }
