"""Recurrent binary classifier over fixed 20-step counter windows.

Architecture, applied to a normalized 20xF window:

    LSTM (hidden size H, h_0 = c_0 = 0)
      i_t, f_t, o_t = sigmoid(W x_t + U h_{t-1} + b)   per gate
      g_t           = tanh(W_c x_t + U_c h_{t-1} + b_c)
      c_t           = f_t * c_{t-1} + i_t * g_t
      h_t           = o_t * tanh(c_t)
    global average pool over time: v = mean_t h_t
    dense sigmoid head: p = sigmoid(w_d . v + b_d)

trained against binary cross-entropy with the probability clamped to
[1e-12, 1 - 1e-12]. The backward pass is exact backpropagation through
time across all 20 steps, including the 1/T fan-out the pooling layer
puts on every timestep's hidden state.

All kernels run batched over (B, T, F); per-trace entry points call the
batched path with B = 1 so there is a single source of truth for the
arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .groups import PerformanceGroup, get_group
from .rng import CounterRng
from .traces import (
    Label,
    Normalizer,
    TraceSeries,
    identity_normalizer,
    normalize_values,
)

MODEL_FORMAT_VERSION = 1
BCE_CLAMP = 1e-12

# Canonical parameter order. Initialization draws, serialization, and
# gradient dictionaries all follow it.
PARAM_FIELDS = (
    "w_i", "w_f", "w_c", "w_o",
    "u_i", "u_f", "u_c", "u_o",
    "b_i", "b_f", "b_c", "b_o",
    "w_d", "b_d",
)

_JSON_KEY = {
    "w_i": "W_i", "w_f": "W_f", "w_c": "W_c", "w_o": "W_o",
    "u_i": "U_i", "u_f": "U_f", "u_c": "U_c", "u_o": "U_o",
    "b_i": "b_i", "b_f": "b_f", "b_c": "b_c", "b_o": "b_o",
    "w_d": "w_d", "b_d": "b_d",
}


def param_shapes(input_dim: int, hidden_dim: int) -> dict[str, tuple[int, ...]]:
    f, h = input_dim, hidden_dim
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in ("i", "f", "c", "o"):
        shapes[f"w_{gate}"] = (h, f)
        shapes[f"u_{gate}"] = (h, h)
        shapes[f"b_{gate}"] = (h,)
    shapes["w_d"] = (h,)
    shapes["b_d"] = (1,)
    return shapes


@dataclass(eq=False)
class ModelParameters:
    input_dim: int
    hidden_dim: int
    w_i: np.ndarray
    w_f: np.ndarray
    w_c: np.ndarray
    w_o: np.ndarray
    u_i: np.ndarray
    u_f: np.ndarray
    u_c: np.ndarray
    u_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    w_d: np.ndarray
    b_d: np.ndarray
    normalizer: Normalizer
    group: PerformanceGroup | None = None

    def __post_init__(self):
        shapes = param_shapes(self.input_dim, self.hidden_dim)
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise DataError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        if self.normalizer.n_features != self.input_dim:
            raise DataError(
                f"normalizer covers {self.normalizer.n_features} features, "
                f"model expects {self.input_dim}"
            )
        if self.group is not None and self.group.n_metrics != self.input_dim:
            raise DataError(
                f"group {self.group.name} has {self.group.n_metrics} metrics, "
                f"model expects {self.input_dim}"
            )

    def weight_items(self):
        for name in PARAM_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> "ModelParameters":
        fresh = {name: arr.copy() for name, arr in self.weight_items()}
        return replace(self, **fresh)


@dataclass(frozen=True, eq=False)
class HiddenSequence:
    h: np.ndarray
    c: np.ndarray


Gradients = dict[str, np.ndarray]


def init_params(
    input_dim: int,
    hidden_dim: int,
    seed: int,
    normalizer: Normalizer | None = None,
    group: PerformanceGroup | None = None,
) -> ModelParameters:
    """Glorot-uniform kernels, zero biases except forget bias 1.0.

    Kernels draw uniform in +-sqrt(6 / (fan_in + fan_out)) from one
    seeded stream, in PARAM_FIELDS order (w_i, w_f, w_c, w_o, then the
    recurrent kernels, then w_d), each filled row-major. The forget
    bias starts at 1.0 to keep the cell state alive over the window.
    """
    if input_dim < 1 or hidden_dim < 1:
        raise DataError("input_dim and hidden_dim must be >= 1")
    f, h = input_dim, hidden_dim
    rng = CounterRng(seed)

    def draw(shape, fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        n = int(np.prod(shape))
        return rng.uniform_range(-bound, bound, n).reshape(shape)

    fields: dict[str, np.ndarray] = {}
    for gate in ("i", "f", "c", "o"):
        fields[f"w_{gate}"] = draw((h, f), f, h)
    for gate in ("i", "f", "c", "o"):
        fields[f"u_{gate}"] = draw((h, h), h, h)
    for gate in ("i", "f", "c", "o"):
        fields[f"b_{gate}"] = np.ones(h) if gate == "f" else np.zeros(h)
    fields["w_d"] = draw((h,), h, 1)
    fields["b_d"] = np.zeros(1)

    if normalizer is None:
        normalizer = identity_normalizer(f)
    return ModelParameters(
        input_dim=f, hidden_dim=h, normalizer=normalizer, group=group, **fields
    )


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, stable for large |z| in both directions."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_input(params: ModelParameters, x: np.ndarray, ndim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != ndim:
        raise DataError(f"expected a {ndim}-d input, got shape {x.shape}")
    if x.shape[-1] != params.input_dim:
        raise DataError(
            f"feature count mismatch: model expects {params.input_dim}, got {x.shape[-1]}"
        )
    return x


def _forward_batch(params: ModelParameters, x: np.ndarray) -> dict:
    """LSTM + pooling + head over a normalized (B, T, F) batch.

    Returns every intermediate needed by the backward pass, stacked as
    (T, B, H) arrays.
    """
    b, t_len, _f = x.shape
    h_dim = params.hidden_dim
    # Non-finite weights are diagnosed by callers; keep numpy quiet here so a
    # diverged run surfaces as one error instead of a warning cascade.
    warn_ctx = np.errstate(over="ignore", invalid="ignore")
    h = np.zeros((b, h_dim))
    c = np.zeros((b, h_dim))
    gates_i = np.empty((t_len, b, h_dim))
    gates_f = np.empty((t_len, b, h_dim))
    gates_o = np.empty((t_len, b, h_dim))
    cand = np.empty((t_len, b, h_dim))
    cells = np.empty((t_len, b, h_dim))
    tanh_c = np.empty((t_len, b, h_dim))
    hidden = np.empty((t_len, b, h_dim))
    h_prev = np.empty((t_len, b, h_dim))
    c_prev = np.empty((t_len, b, h_dim))

    with warn_ctx:
        for t in range(t_len):
            xt = x[:, t, :]
            h_prev[t] = h
            c_prev[t] = c
            gi = sigmoid(xt @ params.w_i.T + h @ params.u_i.T + params.b_i)
            gf = sigmoid(xt @ params.w_f.T + h @ params.u_f.T + params.b_f)
            go = sigmoid(xt @ params.w_o.T + h @ params.u_o.T + params.b_o)
            gc = np.tanh(xt @ params.w_c.T + h @ params.u_c.T + params.b_c)
            c = gf * c + gi * gc
            tc = np.tanh(c)
            h = go * tc
            gates_i[t], gates_f[t], gates_o[t], cand[t] = gi, gf, go, gc
            cells[t], tanh_c[t], hidden[t] = c, tc, h

        pooled = hidden.mean(axis=0)
        logit = pooled @ params.w_d + params.b_d[0]
        prob = sigmoid(logit)
    return {
        "x": x, "i": gates_i, "f": gates_f, "o": gates_o, "g": cand,
        "c": cells, "tanh_c": tanh_c, "h": hidden,
        "h_prev": h_prev, "c_prev": c_prev,
        "pooled": pooled, "prob": prob,
    }


def lstm_forward(params: ModelParameters, x: np.ndarray) -> HiddenSequence:
    """Run the recurrence over one normalized (T, F) window."""
    x = _check_input(params, x, 2)
    cache = _forward_batch(params, x[None, :, :])
    return HiddenSequence(h=cache["h"][:, 0, :].copy(), c=cache["c"][:, 0, :].copy())


def gap_forward(hs: HiddenSequence | np.ndarray) -> np.ndarray:
    """Arithmetic mean of hidden states over the time axis."""
    h = hs.h if isinstance(hs, HiddenSequence) else np.asarray(hs, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise DataError(f"expected a (T, H) sequence with T >= 1, got shape {h.shape}")
    return h.mean(axis=0)


def dense_sigmoid_forward(params: ModelParameters, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.hidden_dim,):
        raise DataError(f"expected an H-vector of length {params.hidden_dim}")
    return float(sigmoid(np.array(v @ params.w_d + params.b_d[0])))


def _target(y: Label | float | int) -> float:
    return y.target if isinstance(y, Label) else float(y)


def bce_loss(p: float, y: Label | float) -> float:
    """Binary cross-entropy with the probability clamped away from 0/1."""
    p_hat = min(max(float(p), BCE_CLAMP), 1.0 - BCE_CLAMP)
    t = _target(y)
    return -(t * math.log(p_hat) + (1.0 - t) * math.log(1.0 - p_hat))


def _bce_batch(prob: np.ndarray, y: np.ndarray) -> float:
    with np.errstate(invalid="ignore"):
        p_hat = np.clip(prob, BCE_CLAMP, 1.0 - BCE_CLAMP)
        losses = -(y * np.log(p_hat) + (1.0 - y) * np.log1p(-p_hat))
    return float(losses.mean())


def _normalized_window(params: ModelParameters, trace: TraceSeries) -> np.ndarray:
    if params.group is not None and trace.group.name != params.group.name:
        raise DataError(
            f"group mismatch: model is for {params.group.name}, trace is {trace.group.name}"
        )
    if trace.n_features != params.input_dim:
        raise DataError(
            f"feature count mismatch: model expects {params.input_dim}, "
            f"trace has {trace.n_features}"
        )
    return normalize_values(params.normalizer, trace.values)


def forward_scores(params: ModelParameters, x: np.ndarray) -> np.ndarray:
    """Probabilities for a normalized (B, T, F) batch."""
    x = _check_input(params, x, 3)
    return _forward_batch(params, x)["prob"]


def model_forward(params: ModelParameters, trace: TraceSeries) -> float:
    """Normalize, run the recurrence, pool, and squash to a probability."""
    x = _normalized_window(params, trace)
    return float(forward_scores(params, x[None, :, :])[0])


def backward_batch(
    params: ModelParameters, x: np.ndarray, y: np.ndarray
) -> tuple[float, Gradients]:
    """Mean BCE over a normalized (B, T, F) batch and its exact gradient.

    The loss is the batch mean, so every gradient carries the 1/B
    factor; pooling contributes the 1/T fan-out into each timestep.
    Probabilities pinned by the BCE clamp get zero gradient, which is
    the true derivative of the clamped loss.
    """
    x = _check_input(params, x, 3)
    y = np.asarray(y, dtype=np.float64)
    b, t_len, _ = x.shape
    if y.shape != (b,):
        raise DataError(f"target shape {y.shape} does not match batch size {b}")
    cache = _forward_batch(params, x)
    prob = cache["prob"]
    loss = _bce_batch(prob, y)

    with np.errstate(over="ignore", invalid="ignore"):
        inside = (prob > BCE_CLAMP) & (prob < 1.0 - BCE_CLAMP)
        dlogit = np.where(inside, (prob - y) / b, 0.0)

        grads: Gradients = {
            name: np.zeros_like(arr) for name, arr in params.weight_items()
        }
        grads["w_d"] = cache["pooled"].T @ dlogit
        grads["b_d"] = np.array([dlogit.sum()])

        dpool = dlogit[:, None] * params.w_d[None, :]
        dh_time = dpool / t_len
        dh_carry = np.zeros((b, params.hidden_dim))
        dc_carry = np.zeros((b, params.hidden_dim))

        for t in range(t_len - 1, -1, -1):
            gi, gf, go, gc = cache["i"][t], cache["f"][t], cache["o"][t], cache["g"][t]
            tc = cache["tanh_c"][t]
            dh = dh_time + dh_carry
            da_o = dh * tc * go * (1.0 - go)
            dc = dh * go * (1.0 - tc * tc) + dc_carry
            da_i = dc * gc * gi * (1.0 - gi)
            da_f = dc * cache["c_prev"][t] * gf * (1.0 - gf)
            da_g = dc * gi * (1.0 - gc * gc)

            xt = cache["x"][:, t, :]
            hp = cache["h_prev"][t]
            for gate, da in (("i", da_i), ("f", da_f), ("c", da_g), ("o", da_o)):
                grads[f"w_{gate}"] += da.T @ xt
                grads[f"u_{gate}"] += da.T @ hp
                grads[f"b_{gate}"] += da.sum(axis=0)

            dh_carry = (
                da_i @ params.u_i + da_f @ params.u_f
                + da_g @ params.u_c + da_o @ params.u_o
            )
            dc_carry = dc * gf

    return loss, grads


def model_backward(
    params: ModelParameters, trace: TraceSeries, y: Label | float
) -> tuple[float, Gradients]:
    """Loss and exact gradients for one trace."""
    x = _normalized_window(params, trace)
    return backward_batch(params, x[None, :, :], np.array([_target(y)]))


def gradient_check(
    params: ModelParameters, trace: TraceSeries, y: Label | float, eps: float
) -> float:
    """Max relative error between analytic and central-difference grads.

    Relative error for a pair (a, n) is |a - n| / max(|a|, |n|, 1e-8).
    """
    if eps <= 0:
        raise DataError("eps must be positive")
    _loss, grads = model_backward(params, trace, y)
    work = params.copy()

    def loss_at() -> float:
        return bce_loss(model_forward(work, trace), y)

    worst = 0.0
    for name, arr in work.weight_items():
        flat = arr.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for k in range(flat.shape[0]):
            orig = flat[k]
            flat[k] = orig + eps
            lp = loss_at()
            flat[k] = orig - eps
            lm = loss_at()
            flat[k] = orig
            numeric = (lp - lm) / (2.0 * eps)
            analytic = g_flat[k]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return float(worst)


# ---------------------------------------------------------------------------
# model file format

def serialize_model(params: ModelParameters) -> str:
    """Versioned JSON with flat row-major weight arrays.

    Floats go through repr, so deserializing reproduces every weight
    bit-exactly and reserializing an unchanged model reproduces the
    byte stream.
    """
    weights = {}
    for name, arr in params.weight_items():
        if not np.isfinite(arr).all():
            raise DataError(f"non-finite weight in {name}")
        weights[_JSON_KEY[name]] = [float(v) for v in arr.reshape(-1)]
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "group": params.group.name if params.group is not None else None,
        "metric_names": list(params.group.metric_names) if params.group is not None else None,
        "dims": {"F": params.input_dim, "H": params.hidden_dim},
        "normalizer": {
            "mean": [float(v) for v in params.normalizer.mean],
            "std": [float(v) for v in params.normalizer.std],
        },
        "weights": weights,
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def deserialize_model(stream: str | bytes) -> ModelParameters:
    if isinstance(stream, bytes):
        try:
            stream = stream.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataError(f"model file is not UTF-8: {e}") from None
    try:
        doc = json.loads(stream)
    except json.JSONDecodeError as e:
        raise DataError(f"invalid model JSON: {e}") from None
    if not isinstance(doc, dict):
        raise DataError("invalid model JSON: expected an object")

    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"unsupported format_version {version!r}, expected {MODEL_FORMAT_VERSION}"
        )
    dims = doc.get("dims")
    if not isinstance(dims, dict) or "F" not in dims or "H" not in dims:
        raise DataError("model JSON missing dims.F/dims.H")
    f, h = dims["F"], dims["H"]
    if not (isinstance(f, int) and isinstance(h, int) and f >= 1 and h >= 1):
        raise DataError(f"bad dims: F={f!r}, H={h!r}")

    norm_doc = doc.get("normalizer")
    if not isinstance(norm_doc, dict):
        raise DataError("model JSON missing normalizer")
    mean = np.asarray(norm_doc.get("mean"), dtype=np.float64)
    std = np.asarray(norm_doc.get("std"), dtype=np.float64)
    if mean.shape != (f,) or std.shape != (f,):
        raise DataError("normalizer mean/std length does not match dims.F")
    normalizer = Normalizer(mean, std)

    group = None
    group_name = doc.get("group")
    if group_name is not None:
        group = get_group(group_name)
        if group.n_metrics != f:
            raise DataError(
                f"group {group.name} has {group.n_metrics} metrics, dims.F is {f}"
            )
        names = doc.get("metric_names")
        if names is not None and tuple(names) != group.metric_names:
            raise DataError(f"metric_names do not match group {group.name}")

    weights_doc = doc.get("weights")
    if not isinstance(weights_doc, dict):
        raise DataError("model JSON missing weights")
    shapes = param_shapes(f, h)
    fields: dict[str, np.ndarray] = {}
    for name in PARAM_FIELDS:
        key = _JSON_KEY[name]
        flat = weights_doc.get(key)
        if flat is None:
            raise DataError(f"model JSON missing weight {key}")
        arr = np.asarray(flat, dtype=np.float64)
        expected = shapes[name]
        if arr.ndim != 1 or arr.shape[0] != int(np.prod(expected)):
            raise DataError(
                f"weight {key} has {arr.size} entries, expected {int(np.prod(expected))}"
            )
        if not np.isfinite(arr).all():
            raise DataError(f"non-finite weight in {key}")
        fields[name] = arr.reshape(expected)

    return ModelParameters(
        input_dim=f, hidden_dim=h, normalizer=normalizer, group=group, **fields
    )
