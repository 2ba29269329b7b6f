"""Deterministic workload generation for the benchmark.

Key popularity follows either a uniform or a zipfian(exponent) law over
the loaded key space; the whole op stream is a pure function of the
spec, so equal seeds mean byte-equal runs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadSpec

READ_OP = 0
UPDATE_OP = 1


@dataclass(frozen=True)
class WorkloadSpec:
    record_count: int = 100_000
    op_count: int = 1_000_000
    read_fraction: float = 0.95
    update_fraction: float = 0.05
    value_size: int = 100
    distribution: str = "zipfian"  # uniform | zipfian
    zipf_exponent: float = 0.99
    purpose_mix: tuple = ("analytics",)
    seed: int = 42

    def validate(self) -> "WorkloadSpec":
        if self.record_count <= 0 or self.op_count < 0:
            raise BadSpec("record/op counts must be positive")
        if abs(self.read_fraction + self.update_fraction - 1.0) > 1e-9:
            raise BadSpec("read_fraction + update_fraction must sum to 1")
        if not (0.0 <= self.read_fraction <= 1.0):
            raise BadSpec("read_fraction out of range")
        if self.distribution not in ("uniform", "zipfian"):
            raise BadSpec(f"unknown distribution: {self.distribution}")
        if self.distribution == "zipfian" and self.zipf_exponent <= 0:
            raise BadSpec("zipf exponent must be positive")
        if self.value_size < 1:
            raise BadSpec("value_size must be >= 1")
        if not self.purpose_mix:
            raise BadSpec("need at least one purpose")
        return self


def key_bytes(index: int) -> bytes:
    return b"user%012d" % index


def value_bytes(spec: WorkloadSpec, op_index: int) -> bytes:
    stamp = b"%d:%d;" % (spec.seed, op_index)
    reps = spec.value_size // len(stamp) + 1
    return (stamp * reps)[: spec.value_size]


class OpStream:
    """Materialized op stream: parallel arrays of op kinds and key ranks."""

    def __init__(self, spec: WorkloadSpec, kinds: np.ndarray, key_indices: np.ndarray):
        self.spec = spec
        self.kinds = kinds
        self.key_indices = key_indices

    def __len__(self) -> int:
        return len(self.kinds)

    def __iter__(self):
        purposes = self.spec.purpose_mix
        nprp = len(purposes)
        for j in range(len(self.kinds)):
            yield self.kinds[j], int(self.key_indices[j]), purposes[j % nprp]


def generate(spec: WorkloadSpec) -> OpStream:
    spec = spec.validate()
    rng = np.random.default_rng(spec.seed)
    kinds = (rng.random(spec.op_count) >= spec.read_fraction).astype(np.int8)
    if spec.distribution == "uniform":
        keys = rng.integers(0, spec.record_count, size=spec.op_count, dtype=np.int64)
    else:
        ranks = np.arange(1, spec.record_count + 1, dtype=np.float64)
        weights = ranks ** (-spec.zipf_exponent)
        cumulative = np.cumsum(weights)
        draws = rng.random(spec.op_count) * cumulative[-1]
        keys = np.searchsorted(cumulative, draws, side="left").astype(np.int64)
    return OpStream(spec, kinds, keys)
