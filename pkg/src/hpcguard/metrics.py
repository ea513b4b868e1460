"""Classification, confusion statistics, and report rendering.

Ransomware is the positive class throughout. The false-negative and
false-positive rates are

    FN_rate = FN / (FN + TP)        missed ransomware
    FP_rate = FP / (FP + TN)        false alarms

left undefined (None, rendered NA) when the denominator is zero rather
than coerced to a number.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DataError
from .model import ModelParameters, forward_scores
from .traces import Label, LabeledDataset, TraceSeries, dataset_tensor, normalize_values

if TYPE_CHECKING:  # rendering consumes the harness's report type
    from .training import GridReport

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise DataError(f"confusion count {name} must be a nonnegative integer")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class RateSummary:
    accuracy: float | None
    fn_rate: float | None
    fp_rate: float | None
    tp_pct: float
    tn_pct: float
    fp_pct: float
    fn_pct: float


def _check_compat(params: ModelParameters, group_name: str, n_features: int):
    if params.group is not None and params.group.name != group_name:
        raise DataError(
            f"group mismatch: model is for {params.group.name}, data is {group_name}"
        )
    if n_features != params.input_dim:
        raise DataError(
            f"feature count mismatch: model expects {params.input_dim}, "
            f"data has {n_features}"
        )


def classify(
    params: ModelParameters, trace: TraceSeries, threshold: float = DEFAULT_THRESHOLD
) -> tuple[Label, float]:
    """Score a trace; ransomware iff score >= threshold."""
    if not (0.0 < threshold < 1.0):
        raise DataError(f"threshold must lie in (0, 1), got {threshold}")
    _check_compat(params, trace.group.name, trace.n_features)
    x = normalize_values(params.normalizer, trace.values)
    score = float(forward_scores(params, x[None, :, :])[0])
    label = Label.RANSOMWARE if score >= threshold else Label.BENIGN
    return label, score


def confusion(
    params: ModelParameters, dataset: LabeledDataset, threshold: float = DEFAULT_THRESHOLD
) -> ConfusionCounts:
    if not (0.0 < threshold < 1.0):
        raise DataError(f"threshold must lie in (0, 1), got {threshold}")
    if len(dataset) == 0:
        raise DataError("cannot evaluate an empty dataset")
    _check_compat(params, dataset.group.name, dataset.group.n_metrics)
    x, y = dataset_tensor(dataset)
    scores = forward_scores(params, normalize_values(params.normalizer, x))
    pred = scores >= threshold
    truth = y >= 0.5
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & truth)),
        tn=int(np.count_nonzero(~pred & ~truth)),
        fp=int(np.count_nonzero(pred & ~truth)),
        fn=int(np.count_nonzero(~pred & truth)),
    )


def rates_from_values(tp: float, tn: float, fp: float, fn: float) -> RateSummary:
    """Rate arithmetic on real-valued counts.

    Scale-invariant, so it applies equally to raw counts and to
    percentage rows (mean confusion percentages of a grid cell).
    """
    for name, v in (("tp", tp), ("tn", tn), ("fp", fp), ("fn", fn)):
        if v < 0:
            raise DataError(f"confusion value {name} must be nonnegative")
    total = tp + tn + fp + fn
    accuracy = (tp + tn) / total if total > 0 else None
    fn_rate = fn / (fn + tp) if (fn + tp) > 0 else None
    fp_rate = fp / (fp + tn) if (fp + tn) > 0 else None
    pct = (lambda v: 100.0 * v / total) if total > 0 else (lambda v: 0.0)
    return RateSummary(
        accuracy=accuracy, fn_rate=fn_rate, fp_rate=fp_rate,
        tp_pct=pct(tp), tn_pct=pct(tn), fp_pct=pct(fp), fn_pct=pct(fn),
    )


def rates(c: ConfusionCounts) -> RateSummary:
    return rates_from_values(c.tp, c.tn, c.fp, c.fn)


# ---------------------------------------------------------------------------
# report rendering

def _fmt_rate(value: float | None) -> str:
    return "NA" if value is None else f"{value:.6f}"


def _pct_cell(value: float | None) -> str:
    return "NA" if value is None else f"{value:.2f}"


def render_accuracy_csv(report: "GridReport", fraction: float) -> str:
    """Long-format accuracy rows for one train fraction."""
    buf = io.StringIO()
    buf.write("group,optimizer,train_fraction,mean_accuracy_pct,n_trials\n")
    for group in report.groups:
        for kind in report.optimizers:
            cell = report.cell(group, kind, fraction)
            if cell is None:
                buf.write(f"{group},{kind.value},{fraction:.2f},NA,0\n")
            else:
                buf.write(
                    f"{group},{kind.value},{fraction:.2f},"
                    f"{100.0 * cell.mean_accuracy:.2f},{cell.n_trials}\n"
                )
    return buf.getvalue()


def render_accuracy_text(report: "GridReport", fraction: float) -> str:
    """Wide table: one row per group, one accuracy column per optimizer."""
    header = ["Group"] + [k.value for k in report.optimizers]
    rows = []
    for group in report.groups:
        row = [group]
        for kind in report.optimizers:
            cell = report.cell(group, kind, fraction)
            row.append("NA" if cell is None else f"{100.0 * cell.mean_accuracy:.2f}%")
        rows.append(row)
    title = (
        f"Mean test accuracy (%), train fraction {fraction:.2f}, "
        f"{report.n_trials} trial(s) per cell"
    )
    return _render_table(title, header, rows)


def render_statistics_csv(report: "GridReport", fraction: float, kind) -> str:
    """Confusion percentage rows (of test size) for one optimizer."""
    buf = io.StringIO()
    buf.write("group,optimizer,tp_pct,tn_pct,fp_pct,fn_pct,fn_rate,fp_rate\n")
    for group in report.groups:
        cell = report.cell(group, kind, fraction)
        if cell is None:
            buf.write(f"{group},{kind.value},NA,NA,NA,NA,NA,NA\n")
            continue
        summary = rates_from_values(
            cell.mean_tp_pct, cell.mean_tn_pct, cell.mean_fp_pct, cell.mean_fn_pct
        )
        buf.write(
            f"{group},{kind.value},{cell.mean_tp_pct:.2f},{cell.mean_tn_pct:.2f},"
            f"{cell.mean_fp_pct:.2f},{cell.mean_fn_pct:.2f},"
            f"{_fmt_rate(summary.fn_rate)},{_fmt_rate(summary.fp_rate)}\n"
        )
    return buf.getvalue()


def render_statistics_text(report: "GridReport", fraction: float, kind) -> str:
    header = ["Group", "TP%", "TN%", "FP%", "FN%", "FN rate", "FP rate"]
    rows = []
    for group in report.groups:
        cell = report.cell(group, kind, fraction)
        if cell is None:
            rows.append([group, "NA", "NA", "NA", "NA", "NA", "NA"])
            continue
        summary = rates_from_values(
            cell.mean_tp_pct, cell.mean_tn_pct, cell.mean_fp_pct, cell.mean_fn_pct
        )
        rows.append([
            group,
            _pct_cell(cell.mean_tp_pct), _pct_cell(cell.mean_tn_pct),
            _pct_cell(cell.mean_fp_pct), _pct_cell(cell.mean_fn_pct),
            _fmt_rate(summary.fn_rate), _fmt_rate(summary.fp_rate),
        ])
    title = (
        f"Mean confusion statistics (% of test set), optimizer {kind.value}, "
        f"train fraction {fraction:.2f}"
    )
    return _render_table(title, header, rows)


def render_report(report: "GridReport", format: str) -> str:
    """Full report: per fraction, the accuracy table plus one statistics
    table per optimizer. format is 'csv' or 'text'."""
    if format not in ("csv", "text"):
        raise DataError(f"unknown report format {format!r} (expected csv or text)")
    if not report.cells:
        raise DataError("empty report: no grid cells completed")
    parts = []
    for fraction in report.fractions:
        if format == "csv":
            parts.append(render_accuracy_csv(report, fraction))
            for kind in report.optimizers:
                parts.append(render_statistics_csv(report, fraction, kind))
        else:
            parts.append(render_accuracy_text(report, fraction))
            for kind in report.optimizers:
                parts.append(render_statistics_text(report, fraction, kind))
    return "\n".join(parts)


def _render_table(title: str, header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for j, cell in enumerate(row):
            widths[j] = max(widths[j], len(cell))
    out = [title, ""]
    # group column left-aligned, value columns right-aligned
    def fmt_row(cells):
        first = cells[0].ljust(widths[0])
        rest = [c.rjust(widths[j + 1]) for j, c in enumerate(cells[1:])]
        return " | ".join([first] + rest)

    out.append(fmt_row(header))
    out.append("-+-".join("-" * w for w in widths))
    out.extend(fmt_row(row) for row in rows)
    return "\n".join(out) + "\n"
