"""Synthetic trace corpora with controllable class separation.

Each class follows an AR(1)-plus-drift model per feature:

    value(t, f) = base(f) + drift(f) * t + e(t, f)
    e(t, f)     = ar * e(t-1, f) + eta(t, f),   e(0, f) = eta(0, f)

with t = 0..19 and eta zero-mean normal at the profile's noise std.
Corpora are pure functions of their spec: one seeded stream drives all
draws, consumed benign block first, then ransomware, trace by trace,
each trace drawing its 20xF noise panel in time-major order. Draws are
consumed even when noise std is zero, so changing a std never shifts
any other trace's randomness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .groups import PerformanceGroup
from .rng import CounterRng
from .traces import (
    WINDOW_LENGTH,
    Label,
    LabeledDataset,
    TraceSeries,
    make_timestamps,
)

DEFAULT_NOISE_STD = 1.0
DEFAULT_AR_COEFF = 0.5
PRESETS = ("standard", "degenerate")


def _profile_array(a, n_features: int | None = None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise DataError(f"profile fields must be 1-d, got shape {arr.shape}")
    if n_features is not None and arr.shape[0] != n_features:
        raise DataError(f"profile field length {arr.shape[0]}, expected {n_features}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ClassProfile:
    base: np.ndarray
    drift: np.ndarray
    noise_std: np.ndarray
    ar_coeff: float

    def __post_init__(self):
        base = _profile_array(self.base)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "drift", _profile_array(self.drift, base.shape[0]))
        object.__setattr__(self, "noise_std", _profile_array(self.noise_std, base.shape[0]))
        if (self.noise_std < 0).any():
            raise DataError("noise std must be non-negative")
        if not (0.0 <= self.ar_coeff < 1.0):
            raise DataError(f"AR coefficient must lie in [0, 1), got {self.ar_coeff}")

    @property
    def n_features(self) -> int:
        return self.base.shape[0]


@dataclass(frozen=True, eq=False)
class CorpusSpec:
    group: PerformanceGroup
    benign: ClassProfile
    ransomware: ClassProfile
    n_per_class: int
    seed: int

    def __post_init__(self):
        for name, profile in (("benign", self.benign), ("ransomware", self.ransomware)):
            if profile.n_features != self.group.n_metrics:
                raise DataError(
                    f"{name} profile has {profile.n_features} features, "
                    f"group {self.group.name} has {self.group.n_metrics} metrics"
                )
        if self.n_per_class < 1:
            raise DataError("n_per_class must be >= 1")


def default_profiles(
    group: PerformanceGroup, separation: float, preset: str = "standard"
) -> tuple[ClassProfile, ClassProfile]:
    """Standard profiles: unit noise, AR 0.5, zero drift, and the
    ransomware base shifted by `separation` in every feature.

    The `degenerate` preset instead gives both classes the same
    zero-noise constant profile (every value 1.0), producing constant
    features that normalize away; `separation` is ignored there.
    """
    f = group.n_metrics
    zeros = np.zeros(f)
    if preset == "standard":
        if separation < 0:
            raise DataError("separation must be >= 0")
        benign = ClassProfile(zeros, zeros, np.full(f, DEFAULT_NOISE_STD), DEFAULT_AR_COEFF)
        shifted = ClassProfile(
            np.full(f, float(separation)), zeros, np.full(f, DEFAULT_NOISE_STD),
            DEFAULT_AR_COEFF,
        )
        return benign, shifted
    if preset == "degenerate":
        constant = ClassProfile(np.ones(f), zeros, zeros, 0.0)
        return constant, constant
    raise DataError(f"unknown preset {preset!r} (expected one of: {', '.join(PRESETS)})")


def _trace_values(profile: ClassProfile, rng: CounterRng) -> np.ndarray:
    f = profile.n_features
    draws = rng.normal(WINDOW_LENGTH * f).reshape(WINDOW_LENGTH, f)
    eta = draws * profile.noise_std
    e = np.empty_like(eta)
    e[0] = eta[0]
    for t in range(1, WINDOW_LENGTH):
        e[t] = profile.ar_coeff * e[t - 1] + eta[t]
    t_idx = np.arange(WINDOW_LENGTH, dtype=np.float64)[:, None]
    return profile.base + profile.drift * t_idx + e


def generate_corpus(spec: CorpusSpec) -> LabeledDataset:
    """2 * n_per_class labeled traces, bit-identical for equal specs."""
    rng = CounterRng(spec.seed)
    timestamps = make_timestamps()
    entries = []
    for label, profile in (
        (Label.BENIGN, spec.benign),
        (Label.RANSOMWARE, spec.ransomware),
    ):
        for i in range(spec.n_per_class):
            values = _trace_values(profile, rng)
            trace = TraceSeries(f"{label.value}-{i:04d}", spec.group, timestamps, values)
            entries.append((trace, label))
    return LabeledDataset(spec.group, tuple(entries))
