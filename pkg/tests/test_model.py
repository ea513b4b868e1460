"""Recurrent classifier: forward pass, gradients, and the model file format."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpcguard.errors import DataError
from hpcguard.groups import GROUPS
from hpcguard.model import (
    BCE_CLAMP,
    PARAM_FIELDS,
    HiddenSequence,
    ModelParameters,
    backward_batch,
    bce_loss,
    dense_sigmoid_forward,
    deserialize_model,
    forward_scores,
    gap_forward,
    gradient_check,
    init_params,
    lstm_forward,
    model_backward,
    model_forward,
    param_shapes,
    serialize_model,
    sigmoid,
)
from hpcguard.rng import CounterRng
from hpcguard.traces import Label, Normalizer, identity_normalizer

from .conftest import adhoc_group, make_trace, zero_model

CLOCK = GROUPS["CLOCK"]
BRANCH = GROUPS["BRANCH"]


def random_trace(group, seed, scale=1.0):
    rng = CounterRng(seed)
    values = scale * rng.normal(20 * group.n_metrics).reshape(20, group.n_metrics)
    return make_trace(group, f"t-{seed}", values=values)


class TestParamShapes:
    def test_shapes(self):
        shapes = param_shapes(3, 5)
        assert shapes["w_i"] == (5, 3)
        assert shapes["u_o"] == (5, 5)
        assert shapes["b_c"] == (5,)
        assert shapes["w_d"] == (5,)
        assert shapes["b_d"] == (1,)
        assert set(shapes) == set(PARAM_FIELDS)
        assert len(shapes) == 14

    def test_wrong_shape_rejected(self):
        fields = {name: np.zeros(shape) for name, shape in param_shapes(1, 2).items()}
        fields["w_i"] = np.zeros((2, 3))
        with pytest.raises(DataError, match=r"parameter w_i has shape \(2, 3\)"):
            ModelParameters(
                input_dim=1, hidden_dim=2, normalizer=identity_normalizer(1), **fields
            )

    def test_normalizer_width_checked(self):
        fields = {name: np.zeros(shape) for name, shape in param_shapes(2, 2).items()}
        with pytest.raises(DataError, match="normalizer covers 1 features"):
            ModelParameters(
                input_dim=2, hidden_dim=2, normalizer=identity_normalizer(1), **fields
            )

    def test_group_width_checked(self):
        fields = {name: np.zeros(shape) for name, shape in param_shapes(2, 2).items()}
        with pytest.raises(DataError, match="group CLOCK has 1 metrics"):
            ModelParameters(
                input_dim=2, hidden_dim=2, normalizer=identity_normalizer(2),
                group=CLOCK, **fields,
            )

    def test_copy_is_deep(self):
        params = zero_model(input_dim=1, hidden_dim=2)
        clone = params.copy()
        clone.w_d[0] = 9.0
        assert params.w_d[0] == 0.0


class TestInitParams:
    def test_glorot_bounds_tiny(self):
        params = init_params(1, 1, seed=0)
        bound = math.sqrt(3.0)  # 6 / (1 + 1)
        for name in ("w_i", "w_f", "w_c", "w_o", "u_i", "u_f", "u_c", "u_o", "w_d"):
            kernel = getattr(params, name)
            assert np.abs(kernel).max() < bound

    def test_glorot_bounds_wide(self):
        params = init_params(6, 32, seed=1)
        bound = math.sqrt(6.0 / 38.0)
        for gate in ("i", "f", "c", "o"):
            kernel = getattr(params, f"w_{gate}")
            assert np.abs(kernel).max() < bound
            assert np.abs(kernel).max() > 0.8 * bound  # draws fill the range
        assert np.abs(params.u_i).max() < math.sqrt(6.0 / 64.0)
        assert np.abs(params.w_d).max() < math.sqrt(6.0 / 33.0)

    def test_bias_initialization(self):
        params = init_params(2, 4, seed=2)
        assert np.array_equal(params.b_f, np.ones(4))
        for name in ("b_i", "b_c", "b_o"):
            assert np.array_equal(getattr(params, name), np.zeros(4))
        assert params.b_d[0] == 0.0

    def test_draw_order_matches_stream(self):
        f, h = 3, 2
        params = init_params(f, h, seed=77)
        rng = CounterRng(77)
        bound_w = math.sqrt(6.0 / (f + h))
        for gate in ("i", "f", "c", "o"):
            expect = rng.uniform_range(-bound_w, bound_w, h * f).reshape(h, f)
            assert np.array_equal(getattr(params, f"w_{gate}"), expect)
        bound_u = math.sqrt(6.0 / (h + h))
        for gate in ("i", "f", "c", "o"):
            expect = rng.uniform_range(-bound_u, bound_u, h * h).reshape(h, h)
            assert np.array_equal(getattr(params, f"u_{gate}"), expect)
        bound_d = math.sqrt(6.0 / (h + 1))
        assert np.array_equal(params.w_d, rng.uniform_range(-bound_d, bound_d, h))

    def test_deterministic(self):
        a = init_params(2, 3, seed=5)
        b = init_params(2, 3, seed=5)
        c = init_params(2, 3, seed=6)
        assert all(np.array_equal(x, y) for (_, x), (_, y) in zip(a.weight_items(), b.weight_items()))
        assert not np.array_equal(a.w_i, c.w_i)

    def test_dims_validated(self):
        with pytest.raises(DataError, match="must be >= 1"):
            init_params(0, 3, seed=0)


class TestSigmoid:
    def test_midpoint(self):
        assert sigmoid(np.array(0.0)) == 0.5

    def test_saturation_stable(self):
        assert sigmoid(np.array(800.0)) == 1.0
        assert sigmoid(np.array(-800.0)) == 0.0
        assert np.isfinite(sigmoid(np.array([-1e308, 1e308]))).all()

    def test_symmetry(self):
        z = np.linspace(-30, 30, 101)
        assert np.abs(sigmoid(z) + sigmoid(-z) - 1.0).max() < 1e-15

    def test_large_logit_within_ulp_of_one(self):
        assert abs(float(sigmoid(np.array(40.0))) - 1.0) <= 1e-15


class TestForward:
    def test_zero_model_is_indifferent(self):
        params = zero_model(group=CLOCK)
        trace = make_trace(CLOCK, fill=123.0)
        assert model_forward(params, trace) == 0.5
        hs = lstm_forward(params, trace.values)
        assert np.array_equal(hs.h, np.zeros((20, 2)))
        assert np.array_equal(hs.c, np.zeros((20, 2)))

    def test_candidate_bias_scalar_recurrence(self):
        # zero weights except the candidate bias: every gate sits at 1/2,
        # so c follows c_t = c_{t-1}/2 + tanh(b_c)/2 and h_t = tanh(c_t)/2
        params = zero_model(input_dim=1, hidden_dim=1)
        params.b_c[0] = 5.0
        hs = lstm_forward(params, np.zeros((20, 1)))
        c, g = 0.0, math.tanh(5.0)
        for t in range(20):
            c = 0.5 * c + 0.5 * g
            assert abs(hs.c[t, 0] - c) < 1e-12
            assert abs(hs.h[t, 0] - 0.5 * math.tanh(c)) < 1e-12

    def test_hidden_states_bounded(self):
        params = init_params(2, 3, seed=4)
        hs = lstm_forward(params, np.ones((20, 2)))
        assert np.abs(hs.h).max() < 1.0
        assert np.isfinite(hs.c).all()

    def test_input_validation(self):
        params = zero_model(input_dim=2, hidden_dim=2)
        with pytest.raises(DataError, match="expected a 2-d input"):
            lstm_forward(params, np.zeros(20))
        with pytest.raises(DataError, match="feature count mismatch: model expects 2"):
            lstm_forward(params, np.zeros((20, 3)))

    def test_batch_agrees_with_single(self):
        params = init_params(4, 3, seed=8)
        rng = CounterRng(1)
        x = rng.normal(2 * 20 * 4).reshape(2, 20, 4)
        batch = forward_scores(params, x)
        singles = [forward_scores(params, x[i][None])[0] for i in range(2)]
        assert np.abs(batch - np.array(singles)).max() < 1e-12

    def test_group_mismatch(self):
        params = zero_model(group=CLOCK)
        with pytest.raises(DataError, match="model is for CLOCK, trace is BRANCH"):
            model_forward(params, make_trace(BRANCH))

    def test_trace_feature_mismatch(self):
        params = zero_model(input_dim=2, hidden_dim=2)
        with pytest.raises(DataError, match="model expects 2, trace has 1"):
            model_forward(params, make_trace(CLOCK))

    def test_unbound_model_accepts_any_group(self):
        params = zero_model(input_dim=4, hidden_dim=2)
        assert model_forward(params, make_trace(BRANCH)) == 0.5

    def test_normalizer_applied(self):
        # mean removal turns a constant trace into the zero input
        norm = Normalizer(np.array([7.0]), np.array([2.0]))
        params = init_params(1, 2, seed=3, normalizer=norm, group=CLOCK)
        p_const = model_forward(params, make_trace(CLOCK, fill=7.0))
        zero_in = forward_scores(params, np.zeros((1, 20, 1)))[0]
        assert p_const == zero_in


class TestGap:
    def test_column_means(self):
        pooled = gap_forward(np.array([[1.0, 3.0], [2.0, 5.0], [3.0, 7.0]]))
        assert pooled.tolist() == [2.0, 5.0]

    def test_accepts_hidden_sequence(self):
        hs = HiddenSequence(h=np.full((4, 2), 2.5), c=np.zeros((4, 2)))
        assert gap_forward(hs).tolist() == [2.5, 2.5]

    def test_shape_validation(self):
        with pytest.raises(DataError, match="T >= 1"):
            gap_forward(np.zeros((0, 3)))
        with pytest.raises(DataError, match="T >= 1"):
            gap_forward(np.zeros(5))


class TestDenseHead:
    def test_worked_example(self):
        params = zero_model(input_dim=1, hidden_dim=2)
        params.w_d[:] = [1.0, -1.0]
        params.b_d[0] = 0.5
        p = dense_sigmoid_forward(params, np.array([2.0, 1.0]))
        assert abs(p - 1.0 / (1.0 + math.exp(-1.5))) < 1e-15
        assert round(p, 6) == 0.817574

    def test_saturated_logit(self):
        params = zero_model(input_dim=1, hidden_dim=1)
        params.w_d[0] = 1.0
        assert abs(dense_sigmoid_forward(params, np.array([40.0])) - 1.0) <= 1e-15

    def test_vector_length_checked(self):
        params = zero_model(input_dim=1, hidden_dim=2)
        with pytest.raises(DataError, match="H-vector of length 2"):
            dense_sigmoid_forward(params, np.array([1.0, 2.0, 3.0]))


class TestBce:
    def test_half(self):
        assert bce_loss(0.5, 1.0) == math.log(2.0)
        assert bce_loss(0.5, Label.RANSOMWARE) == math.log(2.0)
        assert bce_loss(0.5, 0.0) == math.log(2.0)

    def test_confident_correct_is_clamped_near_zero(self):
        v = bce_loss(1.0, 1.0)
        assert 0.0 < v < 2e-12
        v = bce_loss(0.0, 0.0)
        assert 0.0 < v < 2e-12

    def test_confident_wrong(self):
        assert abs(bce_loss(0.9, 0.0) - 2.302585092994046) < 1e-12
        assert round(bce_loss(0.9, 0.0), 6) == 2.302585

    def test_clamp_bounds_worst_case(self):
        assert abs(bce_loss(0.0, 1.0) - (-math.log(BCE_CLAMP))) < 1e-9
        # the upper clamp 1 - 1e-12 is not exactly representable
        worst_high = -math.log1p(-(1.0 - BCE_CLAMP))
        assert abs(bce_loss(1.0, 0.0) - worst_high) < 1e-9

    @given(
        p=st.floats(min_value=0.0, max_value=1.0),
        y=st.sampled_from([0.0, 1.0]),
    )
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_and_finite(self, p, y):
        v = bce_loss(p, y)
        assert math.isfinite(v)
        assert v >= 0.0


class TestBackward:
    def test_zero_model_head_gradient(self):
        params = zero_model(group=CLOCK)
        trace = make_trace(CLOCK, fill=3.0)
        loss, grads = model_backward(params, trace, Label.RANSOMWARE)
        assert loss == math.log(2.0)
        assert grads["b_d"].tolist() == [-0.5]
        for name in PARAM_FIELDS:
            if name != "b_d":
                assert np.array_equal(grads[name], np.zeros_like(grads[name])), name

    def test_sign_flips_with_target(self):
        params = zero_model(group=CLOCK)
        _, grads = model_backward(params, make_trace(CLOCK), Label.BENIGN)
        assert grads["b_d"].tolist() == [0.5]

    def test_batch_mean_scaling(self):
        params = zero_model(input_dim=1, hidden_dim=2)
        x = np.zeros((2, 20, 1))
        loss, grads = backward_batch(params, x, np.array([1.0, 0.0]))
        assert loss == math.log(2.0)
        assert grads["b_d"].tolist() == [0.0]  # (p-1)/2 + (p-0)/2 at p=1/2

    def test_target_shape_checked(self):
        params = zero_model(input_dim=1, hidden_dim=2)
        with pytest.raises(DataError, match="target shape"):
            backward_batch(params, np.zeros((2, 20, 1)), np.zeros(3))

    def test_pinned_probability_gets_zero_gradient(self):
        params = zero_model(input_dim=1, hidden_dim=1)
        params.b_d[0] = 800.0  # prob saturates to 1.0, clamp pins it
        loss, grads = backward_batch(params, np.zeros((1, 20, 1)), np.array([0.0]))
        assert abs(loss - (-math.log1p(-(1.0 - BCE_CLAMP)))) < 1e-9
        for name in PARAM_FIELDS:
            assert np.array_equal(grads[name], np.zeros_like(grads[name])), name

    def test_gradients_match_central_differences(self):
        group = adhoc_group(2)
        params = init_params(2, 3, seed=11, group=group)
        trace = random_trace(group, seed=12)
        assert gradient_check(params, trace, Label.RANSOMWARE, eps=1e-5) < 1e-4

    def test_gradient_check_negative_class(self):
        group = adhoc_group(3)
        params = init_params(3, 2, seed=21, group=group)
        trace = random_trace(group, seed=22, scale=1.5)
        assert gradient_check(params, trace, Label.BENIGN, eps=1e-5) < 1e-4

    def test_eps_validated(self):
        params = zero_model(group=CLOCK)
        with pytest.raises(DataError, match="eps must be positive"):
            gradient_check(params, make_trace(CLOCK), 1.0, eps=0.0)


class TestSerialization:
    def roundtrip(self, params):
        text = serialize_model(params)
        return text, deserialize_model(text)

    def test_roundtrip_bit_exact(self):
        group = GROUPS["TLB_INSTR"]
        norm = Normalizer(np.array([1.5, -2.25, 0.0]), np.array([3.0, 0.0, 1e-3]))
        params = init_params(3, 4, seed=31, normalizer=norm, group=group)
        text, back = self.roundtrip(params)
        for (name, a), (_, b) in zip(params.weight_items(), back.weight_items()):
            assert a.tobytes() == b.tobytes(), name
        assert back.group is group or back.group.name == "TLB_INSTR"
        assert back.normalizer.mean.tobytes() == norm.mean.tobytes()
        assert back.normalizer.std.tobytes() == norm.std.tobytes()
        assert bool(back.normalizer.degenerate[1])
        assert serialize_model(back) == text

    def test_roundtrip_without_group(self):
        params = init_params(2, 2, seed=32)
        text, back = self.roundtrip(params)
        assert back.group is None
        assert json.loads(text)["group"] is None
        assert serialize_model(back) == text

    def test_accepts_bytes(self):
        params = init_params(1, 1, seed=33, group=CLOCK)
        text = serialize_model(params)
        back = deserialize_model(text.encode("utf-8"))
        assert back.w_d.tolist() == params.w_d.tolist()

    def test_document_layout(self):
        doc = json.loads(serialize_model(init_params(1, 2, seed=34, group=CLOCK)))
        assert doc["format_version"] == 1
        assert doc["dims"] == {"F": 1, "H": 2}
        assert doc["group"] == "CLOCK"
        assert doc["metric_names"] == list(CLOCK.metric_names)
        assert set(doc["weights"]) == {
            "W_i", "W_f", "W_c", "W_o", "U_i", "U_f", "U_c", "U_o",
            "b_i", "b_f", "b_c", "b_o", "w_d", "b_d",
        }
        assert len(doc["weights"]["U_i"]) == 4

    def test_serialize_rejects_non_finite(self):
        params = init_params(1, 1, seed=35)
        params.w_i[0, 0] = np.nan
        with pytest.raises(DataError, match="non-finite weight in w_i"):
            serialize_model(params)

    def tampered(self, mutate):
        doc = json.loads(serialize_model(init_params(1, 2, seed=36, group=GROUPS["DATA"])))
        mutate(doc)
        return json.dumps(doc)

    def test_bad_utf8(self):
        with pytest.raises(DataError, match="not UTF-8"):
            deserialize_model(b"\xff\xfe{}")

    def test_bad_json(self):
        with pytest.raises(DataError, match="invalid model JSON"):
            deserialize_model("{truncated")

    def test_non_object(self):
        with pytest.raises(DataError, match="expected an object"):
            deserialize_model("[1, 2]")

    def test_unsupported_version(self):
        text = self.tampered(lambda d: d.update(format_version=2))
        with pytest.raises(DataError, match="unsupported format_version 2"):
            deserialize_model(text)

    def test_missing_dims(self):
        text = self.tampered(lambda d: d.pop("dims"))
        with pytest.raises(DataError, match=r"missing dims\.F/dims\.H"):
            deserialize_model(text)

    def test_bad_dims(self):
        text = self.tampered(lambda d: d["dims"].update(F=0))
        with pytest.raises(DataError, match="bad dims"):
            deserialize_model(text)

    def test_missing_normalizer(self):
        text = self.tampered(lambda d: d.pop("normalizer"))
        with pytest.raises(DataError, match="missing normalizer"):
            deserialize_model(text)

    def test_normalizer_length(self):
        text = self.tampered(lambda d: d["normalizer"].update(mean=[0.0, 0.0]))
        with pytest.raises(DataError, match="normalizer mean/std length"):
            deserialize_model(text)

    def test_group_width_mismatch(self):
        text = self.tampered(lambda d: d.update(group="BRANCH", metric_names=None))
        with pytest.raises(DataError, match="group BRANCH has 4 metrics, dims.F is 1"):
            deserialize_model(text)

    def test_metric_names_mismatch(self):
        text = self.tampered(lambda d: d.update(metric_names=["x"]))
        with pytest.raises(DataError, match="metric_names do not match group DATA"):
            deserialize_model(text)

    def test_unknown_group_name(self):
        text = self.tampered(lambda d: d.update(group="NOPE", metric_names=None))
        with pytest.raises(DataError, match="unknown performance group"):
            deserialize_model(text)

    def test_missing_weights_object(self):
        text = self.tampered(lambda d: d.pop("weights"))
        with pytest.raises(DataError, match="missing weights"):
            deserialize_model(text)

    def test_missing_weight_key(self):
        text = self.tampered(lambda d: d["weights"].pop("U_f"))
        with pytest.raises(DataError, match="missing weight U_f"):
            deserialize_model(text)

    def test_weight_length_mismatch(self):
        text = self.tampered(lambda d: d["weights"].update(W_i=[1.0, 2.0, 3.0]))
        with pytest.raises(DataError, match="weight W_i has 3 entries, expected 2"):
            deserialize_model(text)

    def test_non_finite_weight(self):
        text = self.tampered(lambda d: d["weights"]["W_o"].__setitem__(0, float("inf")))
        with pytest.raises(DataError, match="non-finite weight in W_o"):
            deserialize_model(text)


@given(seed=st.integers(min_value=0, max_value=2**32), scale=st.floats(min_value=0.1, max_value=50.0))
@settings(max_examples=25, deadline=None)
def test_hidden_magnitude_property(seed, scale):
    # the output gate and tanh keep every hidden coordinate inside (-1, 1)
    params = init_params(2, 3, seed=seed)
    rng = CounterRng(seed ^ 0xABCDEF)
    x = scale * rng.normal(20 * 2).reshape(20, 2)
    hs = lstm_forward(params, x)
    assert np.abs(hs.h).max() < 1.0
