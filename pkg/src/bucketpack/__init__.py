"""bucketpack: corpus packing into fixed-capacity training samples.

Compose tokenized documents into bucket-sized samples with three strategies
(fixed-length concat-and-split, naive length-partitioned buckets, and greedy
multi-bucket composition), score any packing with padding, truncation, and
concatenation ratios, and plan bucketed distributed-training steps at a
constant token budget.
"""

__version__ = "0.1.0"

from .corpus import (
    DistributionSpec,
    Document,
    DocumentSet,
    Histogram,
    default_spec,
    generate_synthetic,
    length_histogram,
    load_documents,
    write_documents,
)
from .metrics import (
    MetricsReport,
    concatenation_ratio,
    evaluate,
    padding_ratio,
    truncation_ratio,
)
from .packing import (
    BucketConfig,
    PackedDataset,
    PackedSample,
    Segment,
    SourceInfo,
    pack_fixed,
    pack_greedy_buckets,
    pack_naive_buckets,
    select_bucket,
    unpack,
)
from .scheduler import (
    PlanStep,
    SchedulePlan,
    ScheduleConfig,
    SpeedTable,
    ThroughputReport,
    batch_size_for,
    estimate_throughput,
    plan_steps,
)

__all__ = [
    "__version__",
    "BucketConfig",
    "DistributionSpec",
    "Document",
    "DocumentSet",
    "Histogram",
    "MetricsReport",
    "PackedDataset",
    "PackedSample",
    "PlanStep",
    "SchedulePlan",
    "ScheduleConfig",
    "Segment",
    "SourceInfo",
    "SpeedTable",
    "ThroughputReport",
    "batch_size_for",
    "concatenation_ratio",
    "default_spec",
    "estimate_throughput",
    "evaluate",
    "generate_synthetic",
    "length_histogram",
    "load_documents",
    "pack_fixed",
    "pack_greedy_buckets",
    "pack_naive_buckets",
    "padding_ratio",
    "plan_steps",
    "select_bucket",
    "truncation_ratio",
    "unpack",
    "write_documents",
]
