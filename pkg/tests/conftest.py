"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from hpcguard.groups import GROUPS, PerformanceGroup
from hpcguard.model import ModelParameters, param_shapes
from hpcguard.optim import OptimizerKind
from hpcguard.synth import CorpusSpec, default_profiles, generate_corpus
from hpcguard.traces import (
    Label,
    LabeledDataset,
    TraceSeries,
    identity_normalizer,
    make_timestamps,
)
from hpcguard.training import TrainConfig


def adhoc_group(n_features: int, name: str | None = None) -> PerformanceGroup:
    """A synthetic group for model-level tests not tied to the taxonomy."""
    return PerformanceGroup(
        name or f"SYNTH_{n_features}",
        tuple(f"feature_{i}" for i in range(n_features)),
    )


def make_trace(
    group: PerformanceGroup,
    trace_id: str = "t-0000",
    values: np.ndarray | None = None,
    fill: float = 0.0,
) -> TraceSeries:
    if values is None:
        values = np.full((20, group.n_metrics), fill, dtype=np.float64)
    return TraceSeries(trace_id, group, make_timestamps(), values)


def make_dataset(
    group: PerformanceGroup, n_benign: int, n_ransomware: int, fill: float = 0.0
) -> LabeledDataset:
    entries = []
    for i in range(n_benign):
        entries.append((make_trace(group, f"b-{i:04d}", fill=fill), Label.BENIGN))
    for i in range(n_ransomware):
        entries.append((make_trace(group, f"r-{i:04d}", fill=fill), Label.RANSOMWARE))
    return LabeledDataset(group, tuple(entries))


def synth_corpus(
    group_name: str = "CLOCK",
    separation: float = 2.0,
    n_per_class: int = 12,
    seed: int = 3,
    preset: str = "standard",
) -> LabeledDataset:
    group = GROUPS[group_name]
    benign, ransomware = default_profiles(group, separation, preset)
    return generate_corpus(CorpusSpec(group, benign, ransomware, n_per_class, seed))


def zero_model(
    group: PerformanceGroup | None = None, input_dim: int | None = None, hidden_dim: int = 2
) -> ModelParameters:
    f = group.n_metrics if group is not None else (input_dim or 1)
    shapes = param_shapes(f, hidden_dim)
    fields = {name: np.zeros(shape) for name, shape in shapes.items()}
    return ModelParameters(
        input_dim=f,
        hidden_dim=hidden_dim,
        normalizer=identity_normalizer(f),
        group=group,
        **fields,
    )


def quick_config(
    optimizer: OptimizerKind = OptimizerKind.ADAMAX,
    seed: int = 5,
    epochs: int = 15,
    hidden_dim: int = 8,
    train_fraction: float = 0.7,
    **kwargs,
) -> TrainConfig:
    return TrainConfig(
        optimizer=optimizer,
        train_fraction=train_fraction,
        seed=seed,
        epochs=epochs,
        hidden_dim=hidden_dim,
        **kwargs,
    )


@pytest.fixture(scope="session")
def clock_corpus() -> LabeledDataset:
    """Small well-separated single-feature corpus; enough for split+carve."""
    return synth_corpus("CLOCK", separation=3.0, n_per_class=12, seed=3)


@pytest.fixture(scope="session")
def branch_corpus() -> LabeledDataset:
    return synth_corpus("BRANCH", separation=3.0, n_per_class=12, seed=9)
