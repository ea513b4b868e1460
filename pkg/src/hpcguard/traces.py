"""Trace data model: fixed-window counter timeseries and labeled datasets.

A trace is one observation window of a running program: 20 samples of a
performance group's metrics taken 100 microseconds apart, covering the
first 2 ms of execution. Datasets pair traces with benign/ransomware
labels and are immutable after construction.

The on-disk form is a long-format CSV with header

    trace_id,label,group,timestamp_us,metric_name,metric_value

one row per (trace, timestamp, metric) cell, rows in any order. Parsing
pivots rows into 20xF matrices in group metric order. Samples past the
2 ms window are dropped at ingest; traces with fewer than 20 samples
are rejected.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .groups import PerformanceGroup, get_group
from .rng import CounterRng

WINDOW_LENGTH = 20
SAMPLE_PERIOD_US = 100
WINDOW_SPAN_US = WINDOW_LENGTH * SAMPLE_PERIOD_US

# Features whose population std falls below this are degenerate:
# constant (or numerically constant) columns carry no signal and
# normalize to 0.0 instead of dividing by ~0.
DEGENERATE_STD = 1e-12

VALIDATION_FRACTION = 0.25

CSV_HEADER = ("trace_id", "label", "group", "timestamp_us", "metric_name", "metric_value")


def make_timestamps() -> np.ndarray:
    """The canonical sampling grid: 100, 200, ..., 2000 µs."""
    ts = np.arange(1, WINDOW_LENGTH + 1, dtype=np.int64) * SAMPLE_PERIOD_US
    ts.setflags(write=False)
    return ts


class Label:
    """Binary class label. Ransomware is the positive class (target 1)."""

    __slots__ = ("value",)

    BENIGN: "Label"
    RANSOMWARE: "Label"

    def __init__(self, value: str):
        self.value = value

    def __repr__(self) -> str:
        return f"Label({self.value})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Label) and other.value == self.value

    def __hash__(self) -> int:
        return hash(self.value)

    @property
    def target(self) -> float:
        return 1.0 if self.value == "ransomware" else 0.0

    @staticmethod
    def parse(text: str) -> "Label":
        if text == "benign":
            return Label.BENIGN
        if text == "ransomware":
            return Label.RANSOMWARE
        raise DataError(f"unknown label {text!r} (expected benign or ransomware)")


Label.BENIGN = Label("benign")
Label.RANSOMWARE = Label("ransomware")


def _readonly_f64(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TraceSeries:
    """One observation window. Construction is permissive about window
    shape so that validate_trace can report violations; only array
    rank and dtype are forced here."""

    trace_id: str
    group: PerformanceGroup
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64, copy=True)
        if ts.ndim != 1:
            raise DataError(f"timestamps must be 1-d, got shape {ts.shape}")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", _readonly_f64(self.values, 2))

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_trace(trace: TraceSeries) -> ValidationResult:
    """Check the window invariants, reporting the first violation."""
    n = trace.timestamps.shape[0]
    if n != WINDOW_LENGTH or trace.values.shape[0] != WINDOW_LENGTH:
        rows = trace.values.shape[0]
        got = n if n != WINDOW_LENGTH else rows
        return ValidationResult(False, f"incomplete window: expected {WINDOW_LENGTH} samples, got {got}")
    if not np.array_equal(trace.timestamps, make_timestamps()):
        return ValidationResult(
            False,
            f"non-uniform 100 µs spacing: expected {SAMPLE_PERIOD_US}, "
            f"{2 * SAMPLE_PERIOD_US}, ..., {WINDOW_SPAN_US} µs",
        )
    if trace.values.shape[1] != trace.group.n_metrics:
        return ValidationResult(
            False,
            f"feature count mismatch: group {trace.group.name} has "
            f"{trace.group.n_metrics} metrics, values have {trace.values.shape[1]}",
        )
    finite = np.isfinite(trace.values)
    if not finite.all():
        t, f = np.argwhere(~finite)[0]
        return ValidationResult(False, f"non-finite value at (t={t}, f={f})")
    return ValidationResult(True)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    group: PerformanceGroup
    entries: tuple[tuple[TraceSeries, Label], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen: set[str] = set()
        for trace, _label in self.entries:
            if trace.group.name != self.group.name:
                raise DataError(
                    f"trace {trace.trace_id!r} has group {trace.group.name}, "
                    f"dataset is {self.group.name}"
                )
            if trace.trace_id in seen:
                raise DataError(f"duplicate trace_id {trace.trace_id!r}")
            seen.add(trace.trace_id)

    def __len__(self) -> int:
        return len(self.entries)

    def count(self, label: Label) -> int:
        return sum(1 for _t, lab in self.entries if lab == label)

    def class_indices(self) -> dict[Label, list[int]]:
        out: dict[Label, list[int]] = {Label.BENIGN: [], Label.RANSOMWARE: []}
        for i, (_t, lab) in enumerate(self.entries):
            out[lab].append(i)
        return out

    def trace_ids(self) -> set[str]:
        return {t.trace_id for t, _ in self.entries}

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.group, tuple(self.entries[i] for i in indices))


def dataset_tensor(dataset: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Stack a dataset into (values: N x 20 x F, targets: N)."""
    if len(dataset) == 0:
        raise DataError("empty dataset")
    x = np.stack([t.values for t, _ in dataset.entries])
    y = np.array([lab.target for _, lab in dataset.entries], dtype=np.float64)
    return x, y


# ---------------------------------------------------------------------------
# normalization

@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly_f64(self.mean, 1))
        object.__setattr__(self, "std", _readonly_f64(self.std, 1))
        if self.mean.shape != self.std.shape:
            raise DataError("normalizer mean/std length mismatch")
        if (self.std < 0).any():
            raise DataError("normalizer std must be non-negative")
        deg = self.std < DEGENERATE_STD
        deg.setflags(write=False)
        object.__setattr__(self, "degenerate", deg)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


def identity_normalizer(n_features: int) -> Normalizer:
    return Normalizer(np.zeros(n_features), np.ones(n_features))


def fit_normalizer(dataset: LabeledDataset) -> Normalizer:
    """Per-feature mean and population std over every sample of every trace."""
    if len(dataset) == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    stacked = np.concatenate([t.values for t, _ in dataset.entries], axis=0)
    return Normalizer(stacked.mean(axis=0), stacked.std(axis=0))


def normalize_values(norm: Normalizer, values: np.ndarray) -> np.ndarray:
    """z-score the trailing feature axis; degenerate features become 0.0."""
    if values.shape[-1] != norm.n_features:
        raise DataError(
            f"feature count mismatch: normalizer has {norm.n_features}, "
            f"values have {values.shape[-1]}"
        )
    safe_std = np.where(norm.degenerate, 1.0, norm.std)
    out = (values - norm.mean) / safe_std
    if norm.degenerate.any():
        out[..., norm.degenerate] = 0.0
    return out


def apply_normalizer(norm: Normalizer, trace: TraceSeries) -> TraceSeries:
    return TraceSeries(
        trace.trace_id, trace.group, trace.timestamps,
        normalize_values(norm, trace.values),
    )


# ---------------------------------------------------------------------------
# CSV ingest / serialization

def _grid_index(ts: int) -> int:
    return ts // SAMPLE_PERIOD_US - 1


def parse_trace_csv(text: str) -> LabeledDataset:
    """Parse long-format trace CSV into a dataset.

    Rows may arrive in any order. Samples beyond the 2 ms window are
    dropped (ingest keeps only the first 20). All structural problems
    raise DataError with the offending line number where one exists.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise DataError("empty input: missing CSV header")
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataError(f"bad header: expected {','.join(CSV_HEADER)!r}")

    group: PerformanceGroup | None = None
    order: list[str] = []
    labels: dict[str, Label] = {}
    cells: dict[str, dict[tuple[int, int], float]] = {}

    for row in reader:
        line = reader.line_num
        if len(row) == 0 or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 6:
            raise DataError(f"line {line}: expected 6 fields, got {len(row)}")
        tid, label_s, group_s, ts_s, metric, value_s = (f.strip() for f in row)

        try:
            row_group = get_group(group_s)
            label = Label.parse(label_s)
        except DataError as e:
            raise DataError(f"line {line}: {e}") from None
        if group is None:
            group = row_group
        elif row_group.name != group.name:
            raise DataError(
                f"line {line}: mixed groups: {row_group.name} in a {group.name} file"
            )

        prev = labels.get(tid)
        if prev is None:
            labels[tid] = label
            order.append(tid)
            cells[tid] = {}
        elif prev != label:
            raise DataError(f"line {line}: mixed labels for trace {tid!r}")

        try:
            ts = int(ts_s)
        except ValueError:
            raise DataError(f"line {line}: non-integer timestamp {ts_s!r}") from None
        if ts < SAMPLE_PERIOD_US or ts % SAMPLE_PERIOD_US != 0:
            raise DataError(
                f"line {line}: timestamp {ts} off the "
                f"{SAMPLE_PERIOD_US} µs grid"
            )
        try:
            f_idx = group.metric_index(metric)
        except DataError as e:
            raise DataError(f"line {line}: {e}") from None
        try:
            value = float(value_s)
        except ValueError:
            raise DataError(f"line {line}: non-numeric value {value_s!r}") from None
        if not math.isfinite(value):
            raise DataError(f"line {line}: non-finite value {value_s!r}")

        if ts > WINDOW_SPAN_US:
            continue
        key = (_grid_index(ts), f_idx)
        if key in cells[tid]:
            raise DataError(
                f"line {line}: duplicate cell (trace {tid!r}, t={ts}, metric {metric!r})"
            )
        cells[tid][key] = value

    if group is None or not order:
        raise DataError("no trace rows found")

    timestamps = make_timestamps()
    entries = []
    for tid in order:
        got = cells[tid]
        values = np.empty((WINDOW_LENGTH, group.n_metrics), dtype=np.float64)
        for t in range(WINDOW_LENGTH):
            for f in range(group.n_metrics):
                if (t, f) not in got:
                    raise DataError(
                        f"incomplete window: trace {tid!r} missing cell "
                        f"(t={(t + 1) * SAMPLE_PERIOD_US}, metric {group.metric_names[f]!r})"
                    )
                values[t, f] = got[(t, f)]
        entries.append((TraceSeries(tid, group, timestamps, values), labels[tid]))
    return LabeledDataset(group, tuple(entries))


def dataset_to_csv(dataset: LabeledDataset) -> str:
    """Serialize in canonical row order (trace, then time, then metric).

    Values are written with repr, which round-trips float64 exactly, so
    parse(serialize(d)) is bit-identical to d.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    group = dataset.group
    for trace, label in dataset.entries:
        for t in range(trace.values.shape[0]):
            ts = int(trace.timestamps[t])
            for f, metric in enumerate(group.metric_names):
                writer.writerow(
                    [trace.trace_id, label.value, group.name, ts, metric,
                     repr(float(trace.values[t, f]))]
                )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# splitting

def _floor_count(fraction: float, n: int) -> int:
    # 0.70 * 10 is 6.999... in float64. Nudge before flooring so exact
    # decimal products land on their intended integer.
    return int(math.floor(fraction * n + 1e-9))


def _take(indices: list[int], n_first: int, rng: CounterRng) -> tuple[list[int], list[int]]:
    shuffled = list(indices)
    rng.shuffle(shuffled)
    return shuffled[:n_first], shuffled[n_first:]


def stratified_split(
    dataset: LabeledDataset, train_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per-class split: floor(train_fraction * class_count) traces train,
    the remainder test. Membership is chosen by a seeded shuffle; both
    sides keep the dataset's original entry order."""
    if not (0.0 < train_fraction < 1.0):
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    by_class = dataset.class_indices()
    for label, idx in by_class.items():
        if len(idx) < 2:
            raise DataError(
                f"class {label.value} too small to split: need >= 2, got {len(idx)}"
            )
    rng = CounterRng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    # Benign is consumed from the stream first, then ransomware; the
    # order is part of the determinism contract.
    for label in (Label.BENIGN, Label.RANSOMWARE):
        idx = by_class[label]
        n_train = _floor_count(train_fraction, len(idx))
        tr, te = _take(idx, n_train, rng)
        train_idx.extend(tr)
        test_idx.extend(te)
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def validation_carve(
    train: LabeledDataset, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Carve a quarter of each class out of the training set for
    validation: floor(0.25 * class_count) to val, the rest to fit."""
    by_class = train.class_indices()
    for label, idx in by_class.items():
        if len(idx) < 4:
            raise DataError(
                f"class {label.value} too small to carve validation from: "
                f"need >= 4, got {len(idx)}"
            )
    rng = CounterRng(seed)
    fit_idx: list[int] = []
    val_idx: list[int] = []
    for label in (Label.BENIGN, Label.RANSOMWARE):
        idx = by_class[label]
        n_val = _floor_count(VALIDATION_FRACTION, len(idx))
        va, fi = _take(idx, n_val, rng)
        val_idx.extend(va)
        fit_idx.extend(fi)
    return train.subset(sorted(fit_idx)), train.subset(sorted(val_idx))
