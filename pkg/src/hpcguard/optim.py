"""Parameter update rules: SGD, Adadelta, Adamax, RMSprop.

All four operate elementwise on the model's parameter arrays. The
update arithmetic lives in apply_update, which works on plain dicts of
arrays; step wraps it for ModelParameters. States are never mutated:
stepping returns fresh parameters and a fresh state.

Update rules (g = gradient, per element):

  SGD       w <- w - lr * g
  RMSprop   s <- rho * s + (1 - rho) * g^2
            w <- w - lr * g / sqrt(s + eps)
  Adadelta  s <- rho * s + (1 - rho) * g^2
            delta = -sqrt(u + eps) / sqrt(s + eps) * g
            u <- rho * u + (1 - rho) * delta^2
            w <- w + lr * delta
  Adamax    m <- beta1 * m + (1 - beta1) * g
            u <- max(beta2 * u, |g|)
            w <- w - lr * m / ((1 - beta1^t) * (u + eps))

Adadelta's delta uses the previous squared-update accumulator u and the
freshly updated s. Adamax's t is the post-increment step count, so the
bias correction (1 - beta1^t) is well defined from the first step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DataError, DivergenceError
from .model import ModelParameters

Arrays = dict[str, np.ndarray]


class OptimizerKind(enum.Enum):
    SGD = "SGD"
    ADADELTA = "Adadelta"
    ADAMAX = "Adamax"
    RMSPROP = "RMSprop"

    @staticmethod
    def parse(text: str) -> "OptimizerKind":
        wanted = text.strip().lower()
        for kind in OptimizerKind:
            if kind.value.lower() == wanted:
                return kind
        names = ", ".join(k.value for k in OptimizerKind)
        raise DataError(f"unknown optimizer {text!r} (expected one of: {names})")


DEFAULT_HYPER: dict[OptimizerKind, dict[str, float]] = {
    OptimizerKind.SGD: {"lr": 0.01},
    OptimizerKind.RMSPROP: {"lr": 0.001, "rho": 0.9, "eps": 1e-7},
    OptimizerKind.ADADELTA: {"lr": 1.0, "rho": 0.95, "eps": 1e-7},
    OptimizerKind.ADAMAX: {"lr": 0.002, "beta1": 0.9, "beta2": 0.999, "eps": 1e-7},
}

# Accumulator slots per kind. Shapes mirror the parameters.
_SLOTS: dict[OptimizerKind, tuple[str, ...]] = {
    OptimizerKind.SGD: (),
    OptimizerKind.RMSPROP: ("sq_grad",),
    OptimizerKind.ADADELTA: ("sq_grad", "sq_update"),
    OptimizerKind.ADAMAX: ("moment", "inf_norm"),
}


@dataclass(frozen=True)
class OptimizerState:
    kind: OptimizerKind
    t: int
    hyper: dict[str, float]
    slots: dict[str, Arrays]


def resolve_hyper(
    kind: OptimizerKind, overrides: Mapping[str, float] | None = None
) -> dict[str, float]:
    hyper = dict(DEFAULT_HYPER[kind])
    for key, value in (overrides or {}).items():
        if key not in hyper:
            raise DataError(
                f"hyperparameter {key!r} is not used by {kind.value} "
                f"(accepts: {', '.join(hyper)})"
            )
        hyper[key] = float(value)
    return hyper


def new_state(
    kind: OptimizerKind,
    params: ModelParameters,
    overrides: Mapping[str, float] | None = None,
) -> OptimizerState:
    """Fresh state: zero accumulators, t = 0, defaults plus overrides."""
    slots = {
        slot: {name: np.zeros_like(arr) for name, arr in params.weight_items()}
        for slot in _SLOTS[kind]
    }
    return OptimizerState(kind=kind, t=0, hyper=resolve_hyper(kind, overrides), slots=slots)


def apply_update(
    kind: OptimizerKind,
    hyper: Mapping[str, float],
    t_next: int,
    slots: dict[str, Arrays],
    weights: Arrays,
    grads: Arrays,
) -> tuple[Arrays, dict[str, Arrays]]:
    """One update on dict-of-array weights. Returns (new weights, new slots)."""
    new_w: Arrays = {}
    new_slots: dict[str, Arrays] = {slot: {} for slot in slots}
    lr = hyper["lr"]

    # Extreme hyperparameters may overflow; the run is then caught by the
    # finite-loss checks, so the arithmetic itself stays silent.
    with np.errstate(over="ignore", invalid="ignore"):
        for name, w in weights.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != w.shape:
                raise DataError(
                    f"gradient {name} has shape {g.shape}, expected {w.shape}"
                )
            if not np.isfinite(g).all():
                raise DivergenceError(f"non-finite gradient in {name}")

            if kind is OptimizerKind.SGD:
                new_w[name] = w - lr * g
            elif kind is OptimizerKind.RMSPROP:
                rho, eps = hyper["rho"], hyper["eps"]
                s = rho * slots["sq_grad"][name] + (1.0 - rho) * g * g
                new_slots["sq_grad"][name] = s
                new_w[name] = w - lr * g / np.sqrt(s + eps)
            elif kind is OptimizerKind.ADADELTA:
                rho, eps = hyper["rho"], hyper["eps"]
                s = rho * slots["sq_grad"][name] + (1.0 - rho) * g * g
                u_prev = slots["sq_update"][name]
                delta = -np.sqrt(u_prev + eps) / np.sqrt(s + eps) * g
                new_slots["sq_grad"][name] = s
                new_slots["sq_update"][name] = (
                    rho * u_prev + (1.0 - rho) * delta * delta
                )
                new_w[name] = w + lr * delta
            elif kind is OptimizerKind.ADAMAX:
                beta1, beta2, eps = hyper["beta1"], hyper["beta2"], hyper["eps"]
                m = beta1 * slots["moment"][name] + (1.0 - beta1) * g
                u = np.maximum(beta2 * slots["inf_norm"][name], np.abs(g))
                new_slots["moment"][name] = m
                new_slots["inf_norm"][name] = u
                correction = 1.0 - beta1 ** t_next
                new_w[name] = w - lr * m / (correction * (u + eps))
            else:  # pragma: no cover
                raise DataError(f"unhandled optimizer kind {kind}")

    return new_w, new_slots


def step(
    state: OptimizerState, params: ModelParameters, grads: Mapping[str, np.ndarray]
) -> tuple[ModelParameters, OptimizerState]:
    weights = dict(params.weight_items())
    missing = set(weights) - set(grads)
    if missing:
        raise DataError(f"gradients missing entries: {sorted(missing)}")
    t_next = state.t + 1
    new_w, new_slots = apply_update(
        state.kind, state.hyper, t_next, state.slots, weights, dict(grads)
    )
    new_params = ModelParameters(
        input_dim=params.input_dim,
        hidden_dim=params.hidden_dim,
        normalizer=params.normalizer,
        group=params.group,
        **new_w,
    )
    new_state_ = OptimizerState(
        kind=state.kind, t=t_next, hyper=dict(state.hyper), slots=new_slots
    )
    return new_params, new_state_
