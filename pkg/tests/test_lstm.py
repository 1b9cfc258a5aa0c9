"""Sequence engine tests.

The gradient tests compare exact BPTT against central finite differences;
the forward tests compare against a literal re-transcription of the gate
formulas that shares no code with the implementation.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meterpriv.errors import ConfigError, NumericError, UsageError
from meterpriv.lstm import (
    GATE_ORDER,
    LayerStackParams,
    LstmCellParams,
    LstmState,
    init_params,
    load_params,
    lstm_step,
    params_equal,
    save_params,
    stack_backward,
    stack_forward,
    zeros_like_grads,
)


def scripted_cell_step(params, h_prev, c_prev, w_t):
    """Independent single-step oracle: the six gate formulas, verbatim."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    def pre(gate):
        return (
            params.gate_bias(gate)
            + params.gate_w_rec(gate) @ h_prev
            + params.gate_w_in(gate) @ w_t
        )

    f = sig(pre("forget"))
    g = sig(pre("input"))
    cand = np.tanh(pre("candidate"))
    o = sig(pre("output"))
    c = f * c_prev + g * cand
    h = o * np.tanh(c)
    return h, c


def scripted_stack_forward(stack, w_seq):
    """Independent multi-layer forward oracle built on scripted_cell_step."""
    x_seq = [np.asarray(w, dtype=float) for w in w_seq]
    for layer in stack.layers:
        h = np.zeros(layer.hidden_size)
        c = np.zeros(layer.hidden_size)
        outs = []
        for x in x_seq:
            h, c = scripted_cell_step(layer, h, c, x)
            outs.append(h)
        x_seq = outs
    outputs = []
    for h in x_seq:
        pre = stack.head_w @ h + stack.head_b
        if stack.head == "linear":
            outputs.append(pre)
        elif stack.head == "softmax":
            e = np.exp(pre - pre.max())
            outputs.append(e / e.sum())
        else:
            outputs.append(1.0 / (1.0 + np.exp(-pre)))
    return np.array(outputs)


def zero_cell(hidden, d_in):
    return LstmCellParams(
        np.zeros((4 * hidden, d_in)), np.zeros((4 * hidden, hidden)), np.zeros(4 * hidden)
    )


def fd_gradient(stack, inputs, dout, step=1e-5):
    """Central-difference gradients of L = sum(outputs * dout)."""
    grads = {}
    for name, arr in stack.named_arrays():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(np.sum(stack_forward(stack, inputs)[0] * dout))
            flat[i] = orig - step
            lo = float(np.sum(stack_forward(stack, inputs)[0] * dout))
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def max_rel_err(a, b):
    num = np.abs(a - b)
    den = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return float((num / den).max()) if a.size else 0.0


class TestCellStep:
    def test_zero_params_zero_state_is_fixed_point(self):
        params = zero_cell(3, 2)
        state = LstmState.zeros(3)
        new, rec = lstm_step(params, state, np.array([5.0, -2.0]))
        assert np.array_equal(new.h, np.zeros(3))
        assert np.array_equal(new.c, np.zeros(3))
        assert np.allclose(rec.forget, 0.5)
        assert np.allclose(rec.candidate, 0.0)

    def test_zero_params_halve_cell_state(self):
        params = zero_cell(2, 1)
        c = np.array([0.8, -1.2])
        new, _ = lstm_step(params, LstmState(np.zeros(2), c), np.array([0.3]))
        assert np.allclose(new.c, 0.5 * c, atol=1e-15)
        assert np.allclose(new.h, 0.5 * np.tanh(0.5 * c), atol=1e-15)

    def test_matches_scripted_formulas(self):
        rng = np.random.default_rng(7)
        stack = init_params(1, [2], 1, "linear", rng)
        params = stack.layers[0]
        h_prev = rng.normal(size=2)
        c_prev = rng.normal(size=2)
        w_t = np.array([0.7])
        new, _ = lstm_step(params, LstmState(h_prev, c_prev), w_t)
        h_ref, c_ref = scripted_cell_step(params, h_prev, c_prev, w_t)
        assert np.allclose(new.h, h_ref, atol=1e-12, rtol=0)
        assert np.allclose(new.c, c_ref, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scripted_formulas_batched(self, seed):
        rng = np.random.default_rng(seed)
        params = init_params(3, [4], 1, "linear", rng).layers[0]
        h_prev = rng.normal(size=(6, 4))
        c_prev = rng.normal(size=(6, 4))
        w_t = rng.normal(size=(6, 3))
        new, _ = lstm_step(params, LstmState(h_prev, c_prev), w_t)
        for b in range(6):
            h_ref, c_ref = scripted_cell_step(params, h_prev[b], c_prev[b], w_t[b])
            assert np.allclose(new.h[b], h_ref, atol=1e-12, rtol=0)

    def test_dimension_mismatch_is_config_error(self):
        params = zero_cell(2, 3)
        with pytest.raises(ConfigError):
            lstm_step(params, LstmState.zeros(2), np.zeros(4))
        with pytest.raises(ConfigError):
            lstm_step(params, LstmState.zeros(5), np.zeros(3))

    def test_non_finite_input_is_numeric_error(self):
        params = zero_cell(2, 1)
        with pytest.raises(NumericError, match="w_t"):
            lstm_step(params, LstmState.zeros(2), np.array([np.nan]))
        with pytest.raises(NumericError, match="state.c"):
            lstm_step(params, LstmState(np.zeros(2), np.full(2, np.inf)), np.zeros(1))

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_hidden_state_bounded_by_one(self, seed):
        rng = np.random.default_rng(seed)
        params = LstmCellParams(
            rng.normal(scale=3.0, size=(12, 2)),
            rng.normal(scale=3.0, size=(12, 3)),
            rng.normal(scale=3.0, size=12),
        )
        state = LstmState(np.tanh(rng.normal(size=3)), rng.normal(scale=2.0, size=3))
        for _ in range(4):
            state, _ = lstm_step(params, state, rng.normal(size=2))
            assert np.all(np.abs(state.h) <= 1.0)


class TestStackForward:
    def test_zero_stack_linear_head_outputs_bias(self):
        stack = LayerStackParams([zero_cell(3, 2)], np.zeros((2, 3)), np.array([1.5, -0.25]), "linear")
        out, _ = stack_forward(stack, np.ones((5, 2)))
        assert out.shape == (5, 2)
        assert np.array_equal(out, np.tile([1.5, -0.25], (5, 1)))

    def test_zero_head_softmax_is_uniform(self):
        stack = LayerStackParams([zero_cell(3, 1)], np.zeros((2, 3)), np.zeros(2), "softmax")
        out, _ = stack_forward(stack, np.linspace(0, 1, 4)[:, None])
        assert np.allclose(out, 0.5, atol=0)

    @pytest.mark.parametrize("head", ["linear", "softmax", "sigmoid"])
    def test_matches_scripted_stack(self, head):
        rng = np.random.default_rng(11)
        out_size = 3 if head == "softmax" else 2
        stack = init_params(2, [4, 3], out_size, head, rng)
        inputs = rng.normal(size=(6, 2))
        out, _ = stack_forward(stack, inputs)
        ref = scripted_stack_forward(stack, inputs)
        assert np.allclose(out, ref, atol=1e-12, rtol=0)

    def test_batched_agrees_with_per_sequence(self):
        rng = np.random.default_rng(3)
        stack = init_params(2, [5], 2, "linear", rng)
        batch = rng.normal(size=(4, 7, 2))
        out_b, _ = stack_forward(stack, batch)
        for b in range(4):
            out_s, _ = stack_forward(stack, batch[b])
            assert np.allclose(out_b[b], out_s, atol=1e-14, rtol=0)

    def test_softmax_rows_normalized(self):
        rng = np.random.default_rng(19)
        stack = init_params(1, [6], 4, "softmax", rng)
        out, _ = stack_forward(stack, rng.normal(size=(3, 10, 1)) * 5)
        assert np.all(out > 0) and np.all(out < 1)
        assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_causality_future_perturbation(self, seed):
        rng = np.random.default_rng(seed)
        stack = init_params(2, [4, 4], 2, "linear", rng)
        inputs = rng.normal(size=(8, 2))
        out, _ = stack_forward(stack, inputs)
        t = 4
        perturbed = inputs.copy()
        perturbed[t + 1 :] += rng.normal(size=(8 - t - 1, 2)) * 10
        out_p, _ = stack_forward(stack, perturbed)
        assert np.array_equal(out[: t + 1], out_p[: t + 1])
        assert not np.allclose(out[t + 1 :], out_p[t + 1 :])

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(5)
        stack = init_params(2, [4], 2, "softmax", rng)
        inputs = rng.normal(size=(2, 6, 2))
        a, _ = stack_forward(stack, inputs)
        b, _ = stack_forward(stack, inputs)
        assert np.array_equal(a, b)

    def test_input_size_mismatch(self):
        stack = LayerStackParams([zero_cell(2, 3)], np.zeros((1, 2)), np.zeros(1), "linear")
        with pytest.raises(ConfigError):
            stack_forward(stack, np.zeros((4, 2)))


class TestStackBackward:
    def test_zero_output_gradient_gives_zero_grads(self):
        rng = np.random.default_rng(2)
        stack = init_params(2, [3], 2, "linear", rng)
        inputs = rng.normal(size=(5, 2))
        out, tape = stack_forward(stack, inputs)
        grads, dins = stack_backward(stack, tape, np.zeros_like(out))
        for name, g in grads.items():
            assert not np.any(g), name
        assert not np.any(dins)

    @pytest.mark.parametrize(
        "seed,hidden,head,out_size",
        [
            (0, [4], "linear", 2),
            (1, [3, 2], "linear", 1),
            (2, [4], "softmax", 3),
            (3, [2, 3], "softmax", 2),
            (4, [5], "sigmoid", 2),
        ],
    )
    def test_gradients_match_finite_differences(self, seed, hidden, head, out_size):
        rng = np.random.default_rng(seed)
        stack = init_params(2, hidden, out_size, head, rng)
        inputs = rng.normal(size=(2, 4, 2))
        dout = rng.normal(size=(2, 4, out_size))
        _, tape = stack_forward(stack, inputs)
        grads, _ = stack_backward(stack, tape, dout)
        fd = fd_gradient(stack, inputs, dout)
        for name in fd:
            assert max_rel_err(grads[name], fd[name]) < 1e-4, name

    def test_input_gradients_match_finite_differences(self):
        rng = np.random.default_rng(9)
        stack = init_params(3, [4], 2, "linear", rng)
        inputs = rng.normal(size=(5, 3))
        dout = rng.normal(size=(5, 2))
        _, tape = stack_forward(stack, inputs)
        _, dins = stack_backward(stack, tape, dout)
        fd = np.zeros_like(inputs)
        step = 1e-5
        for i in np.ndindex(inputs.shape):
            bumped = inputs.copy()
            bumped[i] += step
            hi = float(np.sum(stack_forward(stack, bumped)[0] * dout))
            bumped[i] -= 2 * step
            lo = float(np.sum(stack_forward(stack, bumped)[0] * dout))
            fd[i] = (hi - lo) / (2 * step)
        assert max_rel_err(dins, fd) < 1e-4

    def test_input_gradients_zero_after_last_loss_step(self):
        rng = np.random.default_rng(4)
        stack = init_params(2, [4, 3], 2, "linear", rng)
        inputs = rng.normal(size=(7, 2))
        out, tape = stack_forward(stack, inputs)
        dout = np.zeros_like(out)
        dout[3] = 1.0  # loss touches step 3 only
        _, dins = stack_backward(stack, tape, dout)
        assert not np.any(dins[4:])
        assert np.any(dins[:4])

    def test_foreign_tape_rejected(self):
        rng = np.random.default_rng(6)
        stack_a = init_params(1, [2], 1, "linear", rng)
        stack_b = init_params(1, [2], 1, "linear", rng)
        out, tape = stack_forward(stack_a, np.ones((3, 1)))
        with pytest.raises(UsageError):
            stack_backward(stack_b, tape, np.zeros_like(out))

    def test_gradient_shape_mismatch_rejected(self):
        rng = np.random.default_rng(6)
        stack = init_params(1, [2], 1, "linear", rng)
        out, tape = stack_forward(stack, np.ones((3, 1)))
        with pytest.raises(UsageError):
            stack_backward(stack, tape, np.zeros((4, 1)))

    def test_determinism_bit_identical(self):
        rng = np.random.default_rng(13)
        stack = init_params(2, [3], 2, "softmax", rng)
        inputs = rng.normal(size=(2, 5, 2))
        dout = rng.normal(size=(2, 5, 2))
        _, tape = stack_forward(stack, inputs)
        g1, d1 = stack_backward(stack, tape, dout)
        g2, d2 = stack_backward(stack, tape, dout)
        assert np.array_equal(d1, d2)
        for name in g1:
            assert np.array_equal(g1[name], g2[name])


class TestInitAndCheckpoint:
    def test_same_seed_bit_identical(self):
        a = init_params(2, [4, 3], 2, "softmax", np.random.default_rng(42))
        b = init_params(2, [4, 3], 2, "softmax", np.random.default_rng(42))
        assert params_equal(a, b)

    def test_different_seeds_differ(self):
        a = init_params(2, [4], 2, "linear", np.random.default_rng(1))
        b = init_params(2, [4], 2, "linear", np.random.default_rng(2))
        assert not params_equal(a, b)

    @pytest.mark.parametrize("seed", [0, 17, 99])
    def test_forget_bias_is_one(self, seed):
        stack = init_params(3, [4, 5], 2, "linear", np.random.default_rng(seed))
        for layer in stack.layers:
            assert np.array_equal(layer.gate_bias("forget"), np.ones(layer.hidden_size))
            for gate in GATE_ORDER[1:]:
                assert not np.any(layer.gate_bias(gate))

    def test_init_bounds_follow_fan_sizes(self):
        stack = init_params(2, [8], 3, "linear", np.random.default_rng(0))
        layer = stack.layers[0]
        assert np.abs(layer.w_in).max() <= np.sqrt(6.0 / (2 + 8))
        assert np.abs(layer.w_rec).max() <= np.sqrt(6.0 / 16)
        assert np.abs(stack.head_w).max() <= np.sqrt(6.0 / 11)

    def test_gate_views_alias_storage(self):
        stack = init_params(1, [3], 1, "linear", np.random.default_rng(8))
        layer = stack.layers[0]
        layer.gate_w_rec("candidate")[0, 0] = 123.0
        assert layer.w_rec[2 * 3, 0] == 123.0

    def test_checkpoint_round_trip(self, tmp_path):
        stack = init_params(2, [4, 3], 3, "softmax", np.random.default_rng(21))
        path = tmp_path / "stack.json"
        save_params(stack, path)
        loaded = load_params(path)
        assert params_equal(stack, loaded)
        assert loaded.head == "softmax"

    def test_checkpoint_round_trip_preserves_forward(self, tmp_path):
        rng = np.random.default_rng(22)
        stack = init_params(2, [4], 2, "linear", rng)
        inputs = rng.normal(size=(6, 2))
        path = tmp_path / "stack.json"
        save_params(stack, path)
        out_orig, _ = stack_forward(stack, inputs)
        out_loaded, _ = stack_forward(load_params(path), inputs)
        assert np.array_equal(out_orig, out_loaded)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "something-else/v9", "arrays": {}}')
        with pytest.raises(ConfigError):
            load_params(path)

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_params(path)

    def test_invalid_architecture_rejected(self):
        with pytest.raises(ConfigError):
            init_params(0, [4], 2, "linear", np.random.default_rng(0))
        with pytest.raises(ConfigError):
            init_params(2, [], 2, "linear", np.random.default_rng(0))
        with pytest.raises(ConfigError):
            init_params(2, [4], 2, "relu", np.random.default_rng(0))


def test_zeros_like_grads_mirrors_shapes():
    stack = init_params(2, [3, 4], 2, "linear", np.random.default_rng(0))
    grads = zeros_like_grads(stack)
    names = dict(stack.named_arrays())
    assert set(grads) == set(names)
    for name, g in grads.items():
        assert g.shape == names[name].shape
        assert not np.any(g)
