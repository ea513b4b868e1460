"""Training protocol: mini-batch runs, seeded trials, and the full grid.

One trial is: stratified split at the configured train fraction, carve
a quarter of the training set (per class) for validation, train for the
configured epochs retaining the best-validation-loss parameters, then
evaluate once on the held-out test set. Test traces never touch the
normalizer or any training step, and the trial asserts that by
trace_id before evaluating.

A grid runs n_trials such trials per (group, optimizer, fraction) cell,
with every trial's seed derived deterministically from the master seed
and the cell coordinates, so reruns reproduce reports byte for byte.

Seed plumbing, all via rng.derive_seed:

    trial seed    = derive(master, "trial", group, kind, fraction, index)
    split seed    = derive(trial, "split")
    carve seed    = derive(trial, "carve")
    init seed     = derive(trial, "init")
    shuffle seed  = derive(trial, "shuffle")   one stream, all epochs
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError, DivergenceError
from .metrics import ConfusionCounts, confusion, rates
from .model import ModelParameters, backward_batch, forward_scores, init_params
from .optim import OptimizerKind, new_state, resolve_hyper, step
from .rng import CounterRng, derive_seed
from .synth import CorpusSpec, generate_corpus
from .traces import (
    LabeledDataset,
    dataset_tensor,
    fit_normalizer,
    normalize_values,
    stratified_split,
    validation_carve,
)

DEFAULT_EPOCHS = 1000
DEFAULT_BATCH_SIZE = 16
DEFAULT_HIDDEN_DIM = 32
DEFAULT_N_TRIALS = 50


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerKind
    train_fraction: float
    seed: int
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    hidden_dim: int = DEFAULT_HIDDEN_DIM
    n_trials: int = DEFAULT_N_TRIALS
    hyper: tuple[tuple[str, float], ...] = ()
    grad_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")
        # surface bad hyperparameter names at config time, not mid-run
        resolve_hyper(self.optimizer, dict(self.hyper))

    @property
    def hyper_dict(self) -> dict[str, float]:
        return dict(self.hyper)


_INT_KEYS = ("epochs", "batch_size", "hidden_dim", "n_trials", "seed")
_HYPER_KEYS = ("lr", "rho", "beta1", "beta2", "eps")
_REQUIRED_KEYS = ("optimizer", "train_fraction", "seed")


def parse_train_config(text: str) -> TrainConfig:
    """Parse `key = value` lines; # starts a comment, blank lines are
    skipped. Required keys: optimizer, train_fraction, seed."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        known = ("optimizer", "train_fraction", "grad_clip") + _INT_KEYS + _HYPER_KEYS
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = value

    for key in _REQUIRED_KEYS:
        if key not in values:
            raise ConfigError(f"missing config key: {key}")

    def as_int(key: str) -> int:
        try:
            return int(values[key])
        except ValueError:
            raise ConfigError(f"config key {key} must be an integer, got {values[key]!r}") from None

    def as_float(key: str) -> float:
        try:
            return float(values[key])
        except ValueError:
            raise ConfigError(f"config key {key} must be a number, got {values[key]!r}") from None

    kwargs: dict = {
        "optimizer": OptimizerKind.parse(values["optimizer"]),
        "train_fraction": as_float("train_fraction"),
        "seed": as_int("seed"),
    }
    for key in ("epochs", "batch_size", "hidden_dim", "n_trials"):
        if key in values:
            kwargs[key] = as_int(key)
    if "grad_clip" in values:
        kwargs["grad_clip"] = as_float("grad_clip")
    hyper = tuple((k, as_float(k)) for k in _HYPER_KEYS if k in values)
    if hyper:
        kwargs["hyper"] = hyper
    try:
        return TrainConfig(**kwargs)
    except DataError as e:
        raise ConfigError(str(e)) from None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class TrainHistory:
    records: tuple[EpochRecord, ...]
    best_epoch: int
    best_val_loss: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,train_loss,val_loss\n")
        for r in self.records:
            buf.write(f"{r.epoch},{r.train_loss!r},{r.val_loss!r}\n")
        return buf.getvalue()


def _mean_loss(params: ModelParameters, x: np.ndarray, y: np.ndarray) -> float:
    from .model import _bce_batch  # shared clamp arithmetic

    return _bce_batch(forward_scores(params, x), y)


def _clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {name: g * scale for name, g in grads.items()}


def train_model(
    fit: LabeledDataset, val: LabeledDataset, config: TrainConfig
) -> tuple[ModelParameters, TrainHistory]:
    """Mini-batch training with per-epoch validation.

    Every epoch reshuffles the fitting set (seeded), walks it in
    batches of config.batch_size (last batch may be short), takes one
    optimizer step per batch on the batch-mean gradient, then records
    the epoch's mean train loss and validation loss. The returned
    parameters are the ones with the lowest validation loss; ties keep
    the earlier epoch.
    """
    if len(fit) == 0 or len(val) == 0:
        raise DataError("fit and validation sets must be non-empty")
    if fit.group.name != val.group.name:
        raise DataError("fit and validation sets must share a group")

    normalizer = fit_normalizer(fit)
    x_fit_raw, y_fit = dataset_tensor(fit)
    x_val_raw, y_val = dataset_tensor(val)
    x_fit = normalize_values(normalizer, x_fit_raw)
    x_val = normalize_values(normalizer, x_val_raw)

    params = init_params(
        fit.group.n_metrics,
        config.hidden_dim,
        derive_seed(config.seed, "init"),
        normalizer=normalizer,
        group=fit.group,
    )
    opt_state = new_state(config.optimizer, params, config.hyper_dict)
    shuffle_rng = CounterRng(derive_seed(config.seed, "shuffle"))

    n = len(fit)
    best_params = params.copy()
    best_val = float("inf")
    best_epoch = 0
    records: list[EpochRecord] = []

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        try:
            for start in range(0, n, config.batch_size):
                batch = order[start:start + config.batch_size]
                loss, grads = backward_batch(params, x_fit[batch], y_fit[batch])
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch)
                if config.grad_clip is not None:
                    grads = _clip_gradients(grads, config.grad_clip)
                params, opt_state = step(opt_state, params, grads)
                loss_sum += loss * len(batch)
        except DivergenceError as e:
            if e.epoch is None:
                raise DivergenceError(f"{e} (epoch {epoch})", epoch) from None
            raise
        train_loss = loss_sum / n
        val_loss = _mean_loss(params, x_val, y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", epoch)
        records.append(EpochRecord(epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = params.copy()

    return best_params, TrainHistory(tuple(records), best_epoch, best_val)


@dataclass(frozen=True)
class TrialResult:
    group: str
    optimizer: OptimizerKind
    train_fraction: float
    seed: int
    accuracy: float
    counts: ConfusionCounts
    best_epoch: int


@dataclass(frozen=True)
class TrialOutcome:
    """A TrialResult plus the artifacts behind it (model, history)."""

    result: TrialResult
    params: ModelParameters
    history: TrainHistory


def run_trial(
    dataset: LabeledDataset, config: TrainConfig, threshold: float = 0.5
) -> TrialOutcome:
    train, test = stratified_split(
        dataset, config.train_fraction, derive_seed(config.seed, "split")
    )
    fit, val = validation_carve(train, derive_seed(config.seed, "carve"))

    train_ids = train.trace_ids()
    test_ids = test.trace_ids()
    fit_ids = fit.trace_ids()
    val_ids = val.trace_ids()
    if (
        train_ids & test_ids
        or fit_ids & val_ids
        or (fit_ids | val_ids) != train_ids
        or (train_ids | test_ids) != dataset.trace_ids()
    ):
        raise RuntimeError("split invariant violated: train/test partitions leak")

    params, history = train_model(fit, val, config)
    counts = confusion(params, test, threshold)
    summary = rates(counts)
    result = TrialResult(
        group=dataset.group.name,
        optimizer=config.optimizer,
        train_fraction=config.train_fraction,
        seed=config.seed,
        accuracy=summary.accuracy if summary.accuracy is not None else 0.0,
        counts=counts,
        best_epoch=history.best_epoch,
    )
    return TrialOutcome(result, params, history)


@dataclass(frozen=True)
class CellSummary:
    n_trials: int
    mean_accuracy: float
    mean_tp_pct: float
    mean_tn_pct: float
    mean_fp_pct: float
    mean_fn_pct: float


@dataclass(frozen=True)
class GridFailure:
    group: str
    optimizer: OptimizerKind
    train_fraction: float
    trial_index: int
    message: str


@dataclass(frozen=True)
class GridReport:
    groups: tuple[str, ...]
    optimizers: tuple[OptimizerKind, ...]
    fractions: tuple[float, ...]
    n_trials: int
    cells: dict[tuple[str, OptimizerKind, float], CellSummary] = field(default_factory=dict)
    failures: tuple[GridFailure, ...] = ()

    def cell(self, group: str, kind: OptimizerKind, fraction: float) -> CellSummary | None:
        return self.cells.get((group, kind, fraction))


def trial_seed(
    master_seed: int, group: str, kind: OptimizerKind, fraction: float, index: int
) -> int:
    return derive_seed(master_seed, "trial", group, kind.value, float(fraction), index)


def run_grid(
    sources: Mapping[str, LabeledDataset | CorpusSpec],
    optimizers: list[OptimizerKind],
    fractions: list[float],
    n_trials: int,
    master_seed: int,
    epochs: int = DEFAULT_EPOCHS,
    batch_size: int = DEFAULT_BATCH_SIZE,
    hidden_dim: int = DEFAULT_HIDDEN_DIM,
    hyper: Mapping[str, float] | None = None,
) -> GridReport:
    """Run every (group, optimizer, fraction) cell for n_trials trials.

    A failed trial (bad data, divergence) is recorded and the grid
    moves on; the cell's summary averages its completed trials. The
    aggregate is a pure function of the inputs regardless of the order
    cells finish in, because every trial seed is position-derived.
    """
    if not sources or not optimizers or not fractions or n_trials < 1:
        raise DataError("grid needs sources, optimizers, fractions, and n_trials >= 1")
    groups = tuple(sources)
    datasets: dict[str, LabeledDataset] = {}
    for name, source in sources.items():
        if isinstance(source, CorpusSpec):
            if source.group.name != name:
                raise DataError(
                    f"grid source {name!r} wraps a corpus for {source.group.name}"
                )
            datasets[name] = generate_corpus(source)
        else:
            if source.group.name != name:
                raise DataError(
                    f"grid source {name!r} holds a dataset for {source.group.name}"
                )
            datasets[name] = source

    hyper_tuple = tuple(sorted((hyper or {}).items()))
    cells: dict[tuple[str, OptimizerKind, float], CellSummary] = {}
    failures: list[GridFailure] = []

    for group in groups:
        dataset = datasets[group]
        for kind in optimizers:
            for fraction in fractions:
                accs: list[float] = []
                pcts: list[tuple[float, float, float, float]] = []
                for index in range(n_trials):
                    config = TrainConfig(
                        optimizer=kind,
                        train_fraction=fraction,
                        seed=trial_seed(master_seed, group, kind, fraction, index),
                        epochs=epochs,
                        batch_size=batch_size,
                        hidden_dim=hidden_dim,
                        n_trials=n_trials,
                        hyper=hyper_tuple,
                    )
                    try:
                        outcome = run_trial(dataset, config)
                    except (DataError, DivergenceError) as e:
                        failures.append(GridFailure(group, kind, fraction, index, str(e)))
                        continue
                    r = outcome.result
                    total = r.counts.total
                    accs.append(r.accuracy)
                    pcts.append(tuple(100.0 * v / total for v in (
                        r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn
                    )))
                if accs:
                    k = len(accs)
                    cells[(group, kind, fraction)] = CellSummary(
                        n_trials=k,
                        mean_accuracy=sum(accs) / k,
                        mean_tp_pct=sum(p[0] for p in pcts) / k,
                        mean_tn_pct=sum(p[1] for p in pcts) / k,
                        mean_fp_pct=sum(p[2] for p in pcts) / k,
                        mean_fn_pct=sum(p[3] for p in pcts) / k,
                    )

    return GridReport(
        groups=groups,
        optimizers=tuple(optimizers),
        fractions=tuple(fractions),
        n_trials=n_trials,
        cells=cells,
        failures=tuple(failures),
    )
