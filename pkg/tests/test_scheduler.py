import pytest
from hypothesis import given, settings, strategies as st

from bucketpack.scheduler import (
    ScheduleConfig,
    SpeedTable,
    batch_size_for,
    estimate_throughput,
    plan_steps,
)

# Reference operating point: 2048-token buckets at 24 samples per rank, with
# externally measured per-bucket speeds for the four capacities.
REF = ScheduleConfig(reference_capacity=2048, reference_batch=24)
SPEEDS = SpeedTable({2048: 2045.0, 4096: 1814.0, 8192: 1641.0, 16384: 1450.0})
SHARES = {2048: 0.7461, 4096: 0.1752, 8192: 0.0537, 16384: 0.0249}


# ── batch sizes ──────────────────────────────────────────────────────────


def test_batch_size_scales_inverse_to_capacity():
    assert batch_size_for(2048, REF) == 24
    assert batch_size_for(4096, REF) == 12
    assert batch_size_for(8192, REF) == 6
    assert batch_size_for(16384, REF) == 3


def test_batch_size_identity_at_reference():
    assert batch_size_for(REF.reference_capacity, REF) == REF.reference_batch


def test_batch_size_rejects_non_divisible_capacity():
    with pytest.raises(ValueError, match="not divisible"):
        batch_size_for(5000, REF)


def test_config_rejects_zero_world_size():
    with pytest.raises(ValueError, match="world_size"):
        ScheduleConfig(world_size=0)


# ── step planning ────────────────────────────────────────────────────────


def test_plan_fills_full_steps():
    config = ScheduleConfig(world_size=2, seed=0)
    plan = plan_steps({2048: 96}, config)
    assert len(plan.steps) == 2
    assert all(step.bucket == 2048 for step in plan.steps)
    assert all(sum(len(r) for r in step.per_rank) == 48 for step in plan.steps)
    assert plan.dropped == {2048: 0}


def test_plan_drops_leftover_under_drop_policy():
    config = ScheduleConfig(world_size=2, seed=0)
    plan = plan_steps({2048: 100}, config)
    assert len(plan.steps) == 2
    assert plan.consumed == {2048: 96}
    assert plan.dropped == {2048: 4}


def test_plan_pad_batch_fills_final_step_with_flagged_duplicates():
    config = ScheduleConfig(world_size=2, seed=0, leftover_policy="pad-batch")
    plan = plan_steps({2048: 100}, config)
    assert len(plan.steps) == 3
    padded = [s for s in plan.steps if s.padded_duplicates]
    assert len(padded) == 1
    assert padded[0].padded_duplicates == 44
    flat = [i for rank in padded[0].per_rank for i in rank]
    # Duplicates cycle over the bucket's leftover samples only.
    assert set(flat) == set(range(96, 100))
    assert plan.consumed == {2048: 100}
    assert plan.duplicated == {2048: 44}


def test_plan_step_order_is_seeded_and_stable():
    config = ScheduleConfig(world_size=2, seed=123)
    counts = {2048: 48, 4096: 24}
    plan_a = plan_steps(counts, config)
    plan_b = plan_steps(counts, config)
    assert plan_a == plan_b
    assert sorted(s.bucket for s in plan_a.steps) == [2048, 4096]


def test_plan_small_bucket_yields_zero_steps_not_error():
    config = ScheduleConfig(world_size=4, seed=0)
    plan = plan_steps({2048: 10, 4096: 48}, config)
    assert all(step.bucket == 4096 for step in plan.steps)
    assert plan.dropped[2048] == 10


def test_plan_requires_reference_capacity_bucket():
    with pytest.raises(ValueError, match="reference capacity"):
        plan_steps({4096: 48}, ScheduleConfig(world_size=1))


def test_plan_constant_token_budget_across_buckets():
    config = ScheduleConfig(world_size=2, seed=9)
    plan = plan_steps({2048: 96, 4096: 48, 8192: 24, 16384: 12}, config)
    for step in plan.steps:
        per_rank_tokens = [len(rank) * step.bucket for rank in step.per_rank]
        assert all(t == config.reference_capacity * config.reference_batch for t in per_rank_tokens)
        assert sum(per_rank_tokens) == plan.tokens_per_step


@settings(max_examples=80, deadline=None)
@given(
    counts=st.dictionaries(
        st.sampled_from([2048, 4096, 8192, 16384]),
        st.integers(0, 400),
        min_size=1,
    ),
    world=st.integers(1, 8),
    seed=st.integers(0, 2**16),
    policy=st.sampled_from(["drop", "pad-batch"]),
)
def test_plan_conservation_property(counts, world, seed, policy):
    counts = {2048: 64, **counts}
    config = ScheduleConfig(world_size=world, seed=seed, leftover_policy=policy)
    plan = plan_steps(counts, config)
    for cap, n in counts.items():
        assert plan.consumed[cap] + plan.dropped[cap] == n
    used: dict[int, list[int]] = {}
    for step in plan.steps:
        flat = [i for rank in step.per_rank for i in rank]
        used.setdefault(step.bucket, []).extend(
            flat if not step.padded_duplicates else flat[: len(flat) - step.padded_duplicates]
        )
    for cap, indices in used.items():
        assert len(indices) == len(set(indices)), "sample reused outside flagged padding"
        assert max(indices) < counts[cap]


# ── throughput ───────────────────────────────────────────────────────────


def test_relative_speed_of_small_bucket_vs_reference():
    report = estimate_throughput({2048: 0.5, 8192: 0.5}, SPEEDS, reference=8192)
    rel = {cap: r for cap, _, _, r in report.per_bucket}
    assert rel[2048] == pytest.approx(0.246, abs=5e-4)


def test_relative_speed_of_large_bucket_vs_reference():
    report = estimate_throughput({16384: 0.5, 8192: 0.5}, SPEEDS, reference=8192)
    rel = {cap: r for cap, _, _, r in report.per_bucket}
    assert rel[16384] == pytest.approx(-0.116, abs=5e-4)


def test_aggregate_matches_direct_share_over_speed_sum():
    report = estimate_throughput(SHARES, SPEEDS, reference=8192)
    total = sum(SHARES.values())
    direct = 1.0 / sum((share / total) / SPEEDS.for_capacity(cap) for cap, share in SHARES.items())
    assert report.aggregate_tokens_per_s == pytest.approx(direct)
    assert report.aggregate_tokens_per_s == pytest.approx(1956, abs=1)
    assert report.speedup_vs_reference == pytest.approx(0.192, abs=2e-3)


def test_throughput_rejects_bad_share_sum():
    with pytest.raises(ValueError, match="sum to 1"):
        estimate_throughput({2048: 0.5, 8192: 0.4}, SPEEDS, reference=8192)


def test_throughput_rejects_missing_speed():
    with pytest.raises(ValueError, match="no speed entry"):
        estimate_throughput({2048: 0.5, 1024: 0.5}, SPEEDS, reference=2048)


def test_speed_table_rejects_non_positive_speed():
    with pytest.raises(ValueError, match="positive"):
        SpeedTable({2048: 0.0})


@settings(max_examples=80, deadline=None)
@given(
    raw=st.dictionaries(
        st.sampled_from([2048, 4096, 8192, 16384]),
        st.floats(0.01, 1.0),
        min_size=1,
        max_size=4,
    )
)
def test_aggregate_lies_between_bucket_speeds(raw):
    total = sum(raw.values())
    shares = {cap: v / total for cap, v in raw.items()}
    report = estimate_throughput(shares, SPEEDS, reference=8192)
    speeds = [SPEEDS.for_capacity(cap) for cap in shares]
    assert min(speeds) - 1e-9 <= report.aggregate_tokens_per_s <= max(speeds) + 1e-9
