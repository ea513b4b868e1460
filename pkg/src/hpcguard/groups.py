"""Performance event group taxonomy.

Sixteen fixed groups of hardware counter metrics, each measurable in a
single collection pass. A trace always belongs to exactly one group,
and the group's metric list fixes both the feature count and the
feature order of every model trained on it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError


@dataclass(frozen=True)
class PerformanceGroup:
    name: str
    metric_names: tuple[str, ...]

    @property
    def n_metrics(self) -> int:
        return len(self.metric_names)

    def metric_index(self, metric_name: str) -> int:
        try:
            return self.metric_names.index(metric_name)
        except ValueError:
            raise DataError(
                f"unknown metric {metric_name!r} for group {self.name}"
            ) from None


_TABLE: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("BRANCH", (
        "Branch rate",
        "Branch misprediction rate",
        "Branch misprediction ratio",
        "Instructions per branch",
    )),
    ("CLOCK", (
        "Uncore Clock [MHz]",
    )),
    ("CYCLE_ACTIVITY", (
        "Cycles without execution [%]",
        "Cycles with stalls due to L1D [%]",
        "Cycles with stalls due to L2 [%]",
        "Cycles w/o execution due to memory [%]",
    )),
    ("DATA", (
        "Load to store ratio",
    )),
    ("FLOPS_DP", (
        "DP MFLOP/s",
        "AVX DP MFLOP/s",
        "Packed MUOPS/s",
        "Scalar MUOPS/s",
        "Vectorization ratio",
    )),
    ("ICACHE", (
        "L1I request rate",
        "L1I miss rate",
        "L1I miss ratio",
        "L1I stall rate",
    )),
    ("L2_DATA", (
        "L2D load bandwidth [MBytes/s]",
        "L2D load data volume [GBytes]",
        "L2D evict bandwidth [MBytes/s]",
        "L2D evict data volume [GBytes]",
        "L2 bandwidth [MBytes/s]",
        "L2 data volume [GBytes]",
    )),
    ("L2_CACHE", (
        "L2 request rate",
        "L2 miss rate",
        "L2 miss ratio",
    )),
    ("L3_DATA", (
        "L3 load bandwidth [MBytes/s]",
        "L3 load data volume [GBytes]",
        "L3 evict bandwidth [MBytes/s]",
        "L3 evict data volume [GBytes]",
        "L3 bandwidth [MBytes/s]",
        "L3 data volume [GBytes]",
    )),
    ("L3_CACHE", (
        "L3 request rate",
        "L3 miss rate",
        "L3 miss ratio",
    )),
    ("TLB_DATA", (
        "L1 DTLB load misses",
        "L1 DTLB load miss rate",
        "L1 DTLB load miss duration [Cyc]",
        "L1 DTLB store misses",
        "L1 DTLB store miss rate",
        "L1 DTLB store miss duration [Cyc]",
    )),
    ("TLB_INSTR", (
        "L1 ITLB misses",
        "L1 ITLB miss rate",
        "L1 ITLB miss duration [Cyc]",
    )),
    ("UOPS", (
        "Issued UOPs",
        "Executed UOPs",
        "Retired UOPs",
    )),
    ("UOPS_EXEC", (
        "Used cycles ratio [%]",
        "Unused cycles ratio [%]",
        "Avg stall duration [cycles]",
    )),
    ("UOPS_ISSUE", (
        "Used cycles ratio [%]",
        "Unused cycles ratio [%]",
        "Avg stall duration [cycles]",
    )),
    ("UOPS_RETIRE", (
        "Used cycles ratio [%]",
        "Unused cycles ratio [%]",
        "Avg stall duration [cycles]",
    )),
)

GROUPS: dict[str, PerformanceGroup] = {
    name: PerformanceGroup(name, metrics) for name, metrics in _TABLE
}

GROUP_ORDER: tuple[str, ...] = tuple(GROUPS)


def get_group(name: str) -> PerformanceGroup:
    group = GROUPS.get(name)
    if group is None:
        known = ", ".join(GROUP_ORDER)
        raise DataError(f"unknown performance group {name!r} (expected one of: {known})")
    return group
