"""Stacked LSTM sequence models with exact backpropagation through time.

The cell follows the standard four-gate formulation: per gate g in
(forget, input, candidate, output) the parameters are a bias vector b^g,
an input weight matrix V^g and a recurrent weight matrix K^g.  Internally
the four gates are stored row-stacked (shape ``(4H, .)``, block order
forget / input / candidate / output) so one matmul serves all gates; the
per-gate views are exposed for inspection and regularization.

Only this architecture is differentiated: a stack of LSTM layers followed
by one dense head (linear, softmax or sigmoid).  The backward pass
replays the tape recorded during the forward pass, so gradients are exact
up to floating-point rounding.  All arithmetic is float64.

Checkpoint format (versioned, see ``save_params``): a JSON document with
an architecture header and the row-major weight arrays, keyed by the same
names ``named_arrays`` yields.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericError, UsageError

GATE_ORDER = ("forget", "input", "candidate", "output")
HEAD_KINDS = ("linear", "softmax", "sigmoid")

CHECKPOINT_FORMAT = "meterpriv-lstm-stack/v1"


def _require_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


@dataclass
class LstmCellParams:
    """Parameters of one LSTM layer, gate-blocked.

    ``w_in`` is (4H, D_in), ``w_rec`` is (4H, H), ``bias`` is (4H,), with
    rows blocked in GATE_ORDER.  ``gate_bias``/``gate_w_in``/``gate_w_rec``
    return zero-copy views of a single gate's parameters.
    """

    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_rec.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_in.shape[1]

    def _block(self, gate: str) -> slice:
        i = GATE_ORDER.index(gate)
        h = self.hidden_size
        return slice(i * h, (i + 1) * h)

    def gate_bias(self, gate: str) -> np.ndarray:
        return self.bias[self._block(gate)]

    def gate_w_in(self, gate: str) -> np.ndarray:
        return self.w_in[self._block(gate)]

    def gate_w_rec(self, gate: str) -> np.ndarray:
        return self.w_rec[self._block(gate)]

    def validate(self) -> None:
        h = self.w_rec.shape[1]
        if h < 1 or self.w_in.shape[1] < 1:
            raise ConfigError("hidden and input sizes must be >= 1")
        if self.w_rec.shape != (4 * h, h):
            raise ConfigError(f"recurrent weights must be (4H, H), got {self.w_rec.shape}")
        if self.w_in.shape[0] != 4 * h:
            raise ConfigError(f"input weights must be (4H, D_in), got {self.w_in.shape}")
        if self.bias.shape != (4 * h,):
            raise ConfigError(f"bias must be (4H,), got {self.bias.shape}")
        for arr, name in ((self.w_in, "w_in"), (self.w_rec, "w_rec"), (self.bias, "bias")):
            _require_finite(arr, name)


@dataclass
class LstmState:
    """Hidden and cell state of one layer; both (H,) or (B, H)."""

    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, batch: int | None = None) -> "LstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class GateRecord:
    """Activations of one cell step, as needed by the backward pass."""

    forget: np.ndarray
    input: np.ndarray
    candidate: np.ndarray
    output: np.ndarray
    c_new: np.ndarray
    tanh_c: np.ndarray


@dataclass
class LayerStackParams:
    """A stack of LSTM layers plus a dense output head."""

    layers: list[LstmCellParams]
    head_w: np.ndarray  # (D_out, H_last)
    head_b: np.ndarray  # (D_out,)
    head: str  # one of HEAD_KINDS

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def output_size(self) -> int:
        return self.head_w.shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [layer.hidden_size for layer in self.layers]

    def validate(self) -> None:
        if not self.layers:
            raise ConfigError("stack needs at least one LSTM layer")
        if self.head not in HEAD_KINDS:
            raise ConfigError(f"unknown head kind {self.head!r}")
        for layer in self.layers:
            layer.validate()
        for below, above in zip(self.layers, self.layers[1:]):
            if above.input_size != below.hidden_size:
                raise ConfigError(
                    f"layer input size {above.input_size} does not match "
                    f"previous hidden size {below.hidden_size}"
                )
        if self.head_w.shape[1] != self.layers[-1].hidden_size:
            raise ConfigError("head input size does not match last hidden size")
        if self.head_b.shape != (self.head_w.shape[0],):
            raise ConfigError("head bias shape does not match head weights")
        _require_finite(self.head_w, "head_w")
        _require_finite(self.head_b, "head_b")

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Yield (name, array) pairs in a fixed, documented order."""
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}.w_in", layer.w_in
            yield f"layers.{i}.w_rec", layer.w_rec
            yield f"layers.{i}.bias", layer.bias
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def copy(self) -> "LayerStackParams":
        return LayerStackParams(
            layers=[
                LstmCellParams(l.w_in.copy(), l.w_rec.copy(), l.bias.copy())
                for l in self.layers
            ],
            head_w=self.head_w.copy(),
            head_b=self.head_b.copy(),
            head=self.head,
        )

    def num_params(self) -> int:
        return sum(arr.size for _, arr in self.named_arrays())


def params_equal(a: LayerStackParams, b: LayerStackParams) -> bool:
    """Exact (bit-level) equality of two parameter stacks."""
    pairs = list(a.named_arrays()), list(b.named_arrays())
    if a.head != b.head or len(pairs[0]) != len(pairs[1]):
        return False
    for (name_a, arr_a), (name_b, arr_b) in zip(*pairs):
        if name_a != name_b or arr_a.shape != arr_b.shape:
            return False
        if not np.array_equal(arr_a, arr_b):
            return False
    return True


def zeros_like_grads(stack: LayerStackParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in stack.named_arrays()}


def init_params(
    input_size: int,
    hidden_sizes: list[int],
    output_size: int,
    head: str,
    rng: np.random.Generator,
) -> LayerStackParams:
    """Deterministically initialize a stack from ``rng``.

    Weights are uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
    The forget-gate bias starts at 1.0 (keeps the memory path open early
    in training); all other biases start at 0.  Draw order is fixed:
    per layer w_in then w_rec, then the head weights.
    """
    if input_size < 1 or output_size < 1 or not hidden_sizes:
        raise ConfigError("architecture sizes must be >= 1 with at least one layer")
    if any(h < 1 for h in hidden_sizes):
        raise ConfigError("hidden sizes must be >= 1")
    if head not in HEAD_KINDS:
        raise ConfigError(f"unknown head kind {head!r}")

    layers = []
    d_in = input_size
    for h in hidden_sizes:
        s_in = np.sqrt(6.0 / (d_in + h))
        w_in = rng.uniform(-s_in, s_in, size=(4 * h, d_in))
        s_rec = np.sqrt(6.0 / (h + h))
        w_rec = rng.uniform(-s_rec, s_rec, size=(4 * h, h))
        bias = np.zeros(4 * h)
        bias[:h] = 1.0  # forget-gate block
        layers.append(LstmCellParams(w_in, w_rec, bias))
        d_in = h
    s_head = np.sqrt(6.0 / (hidden_sizes[-1] + output_size))
    head_w = rng.uniform(-s_head, s_head, size=(output_size, hidden_sizes[-1]))
    head_b = np.zeros(output_size)
    stack = LayerStackParams(layers, head_w, head_b, head)
    stack.validate()
    return stack


def _cell_forward(
    params: LstmCellParams, h: np.ndarray, c: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, GateRecord]:
    pre = x @ params.w_in.T + h @ params.w_rec.T + params.bias
    hs = params.hidden_size
    f = expit(pre[..., 0 * hs : 1 * hs])
    g = expit(pre[..., 1 * hs : 2 * hs])
    cand = np.tanh(pre[..., 2 * hs : 3 * hs])
    o = expit(pre[..., 3 * hs : 4 * hs])
    c_new = f * c + g * cand
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, GateRecord(f, g, cand, o, c_new, tanh_c)


def lstm_step(
    params: LstmCellParams, state: LstmState, w_t: np.ndarray
) -> tuple[LstmState, GateRecord]:
    """Advance one LSTM cell a single time step.

    ``w_t`` may be (D_in,) or (B, D_in); the state shapes must match.
    """
    params.validate()
    w_t = np.asarray(w_t, dtype=float)
    if w_t.shape[-1] != params.input_size:
        raise ConfigError(
            f"input size {w_t.shape[-1]} does not match cell input size {params.input_size}"
        )
    if state.h.shape[-1] != params.hidden_size or state.h.shape != state.c.shape:
        raise ConfigError("state shapes inconsistent with cell hidden size")
    if w_t.ndim != state.h.ndim:
        raise ConfigError("input and state must share batch layout")
    _require_finite(w_t, "w_t")
    _require_finite(state.h, "state.h")
    _require_finite(state.c, "state.c")
    h_new, c_new, rec = _cell_forward(params, state.h, state.c, w_t)
    return LstmState(h_new, c_new), rec


def _softmax(pre: np.ndarray) -> np.ndarray:
    shifted = pre - pre.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _head_forward(stack: LayerStackParams, h_top: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = h_top @ stack.head_w.T + stack.head_b
    if stack.head == "linear":
        out = pre
    elif stack.head == "softmax":
        out = _softmax(pre)
    else:  # sigmoid
        out = expit(pre)
    return pre, out


@dataclass
class ForwardTape:
    """Cached activations of one ``stack_forward`` call.

    Arrays are batched (B, T, .) even when the caller passed a single
    sequence; ``squeezed`` records that so the backward pass can accept
    and return unbatched gradients.
    """

    stack: LayerStackParams
    layer_inputs: list[np.ndarray]  # per layer (B, T, D_l)
    h: list[np.ndarray]  # per layer (B, T, H_l)
    c: list[np.ndarray]
    gates: list[dict[str, np.ndarray]]  # keys: forget/input/candidate/output/tanh_c
    outputs: np.ndarray  # (B, T, D_out), post-activation
    squeezed: bool

    @property
    def seq_len(self) -> int:
        return self.outputs.shape[1]


def stack_forward(stack: LayerStackParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Run the stack over a sequence, starting from zero states.

    ``inputs`` is (T, D_in) or (B, T, D_in); the output matches
    ((T, D_out) or (B, T, D_out)).  Output at step t depends only on
    inputs at steps <= t.
    """
    stack.validate()
    inputs = np.asarray(inputs, dtype=float)
    squeezed = inputs.ndim == 2
    if squeezed:
        inputs = inputs[None]
    if inputs.ndim != 3:
        raise ConfigError(f"inputs must be (T, D_in) or (B, T, D_in), got ndim={inputs.ndim}")
    batch, seq_len, d_in = inputs.shape
    if seq_len < 1:
        raise ConfigError("sequence length must be >= 1")
    if d_in != stack.input_size:
        raise ConfigError(f"input size {d_in} does not match stack input size {stack.input_size}")
    _require_finite(inputs, "inputs")

    layer_inputs: list[np.ndarray] = []
    h_all: list[np.ndarray] = []
    c_all: list[np.ndarray] = []
    gates_all: list[dict[str, np.ndarray]] = []
    x = inputs
    for layer in stack.layers:
        hs = layer.hidden_size
        h = np.zeros((batch, hs))
        c = np.zeros((batch, hs))
        h_seq = np.empty((batch, seq_len, hs))
        c_seq = np.empty((batch, seq_len, hs))
        recs = {k: np.empty((batch, seq_len, hs)) for k in (*GATE_ORDER, "tanh_c")}
        for t in range(seq_len):
            h, c, rec = _cell_forward(layer, h, c, x[:, t])
            h_seq[:, t] = h
            c_seq[:, t] = c
            recs["forget"][:, t] = rec.forget
            recs["input"][:, t] = rec.input
            recs["candidate"][:, t] = rec.candidate
            recs["output"][:, t] = rec.output
            recs["tanh_c"][:, t] = rec.tanh_c
        layer_inputs.append(x)
        h_all.append(h_seq)
        c_all.append(c_seq)
        gates_all.append(recs)
        x = h_seq

    _, outputs = _head_forward(stack, x)
    tape = ForwardTape(stack, layer_inputs, h_all, c_all, gates_all, outputs, squeezed)
    return (outputs[0] if squeezed else outputs), tape


def _head_backward(stack: LayerStackParams, tape: ForwardTape, dout: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. head pre-activations, from gradient w.r.t. outputs."""
    if stack.head == "linear":
        return dout
    if stack.head == "softmax":
        p = tape.outputs
        inner = (dout * p).sum(axis=-1, keepdims=True)
        return p * (dout - inner)
    s = tape.outputs
    return dout * s * (1.0 - s)


def stack_backward(
    stack: LayerStackParams, tape: ForwardTape, dout: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact BPTT given the loss gradient w.r.t. the (post-activation) outputs.

    Returns (parameter gradients keyed like ``named_arrays``, gradient
    w.r.t. the forward inputs).  The tape must come from a
    ``stack_forward`` call on the same stack object.
    """
    if tape.stack is not stack:
        raise UsageError("tape was recorded by a different stack")
    dout = np.asarray(dout, dtype=float)
    if tape.squeezed:
        if dout.shape != tape.outputs.shape[1:]:
            raise UsageError(
                f"output gradient shape {dout.shape} does not match outputs "
                f"{tape.outputs.shape[1:]}"
            )
        dout = dout[None]
    elif dout.shape != tape.outputs.shape:
        raise UsageError(
            f"output gradient shape {dout.shape} does not match outputs {tape.outputs.shape}"
        )

    grads = zeros_like_grads(stack)
    batch, seq_len, _ = tape.outputs.shape

    dpre = _head_backward(stack, tape, dout)
    h_top = tape.h[-1]
    grads["head.w"] += np.einsum("bto,bth->oh", dpre, h_top)
    grads["head.b"] += dpre.sum(axis=(0, 1))
    dh_above = dpre @ stack.head_w  # (B, T, H_last)

    for li in range(len(stack.layers) - 1, -1, -1):
        layer = stack.layers[li]
        hs = layer.hidden_size
        x = tape.layer_inputs[li]
        h_seq, c_seq, recs = tape.h[li], tape.c[li], tape.gates[li]
        g_w_in = grads[f"layers.{li}.w_in"]
        g_w_rec = grads[f"layers.{li}.w_rec"]
        g_bias = grads[f"layers.{li}.bias"]
        dx = np.empty_like(x)
        dh_rec = np.zeros((batch, hs))
        dc_rec = np.zeros((batch, hs))
        for t in range(seq_len - 1, -1, -1):
            f = recs["forget"][:, t]
            g = recs["input"][:, t]
            cand = recs["candidate"][:, t]
            o = recs["output"][:, t]
            tanh_c = recs["tanh_c"][:, t]
            c_prev = c_seq[:, t - 1] if t > 0 else np.zeros((batch, hs))
            h_prev = h_seq[:, t - 1] if t > 0 else np.zeros((batch, hs))

            dh = dh_above[:, t] + dh_rec
            do = dh * tanh_c
            dc = dc_rec + dh * o * (1.0 - tanh_c**2)
            df = dc * c_prev
            dg = dc * cand
            dcand = dc * g

            da = np.concatenate(
                [
                    df * f * (1.0 - f),
                    dg * g * (1.0 - g),
                    dcand * (1.0 - cand**2),
                    do * o * (1.0 - o),
                ],
                axis=-1,
            )
            g_w_in += da.T @ x[:, t]
            g_w_rec += da.T @ h_prev
            g_bias += da.sum(axis=0)
            dh_rec = da @ layer.w_rec
            dc_rec = dc * f
            dx[:, t] = da @ layer.w_in
        dh_above = dx

    dinputs = dh_above[0] if tape.squeezed else dh_above
    return grads, dinputs


def save_params(stack: LayerStackParams, path: str | os.PathLike) -> None:
    """Write a stack to the versioned JSON checkpoint format.

    Layout: a format tag, an architecture header (layer sizes and head
    kind) and one row-major nested-list array per ``named_arrays`` entry.
    float64 values round-trip exactly through JSON.
    """
    stack.validate()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "architecture": {
            "input_size": stack.input_size,
            "hidden_sizes": stack.hidden_sizes,
            "output_size": stack.output_size,
            "head": stack.head,
            "gate_order": list(GATE_ORDER),
        },
        "arrays": {name: arr.tolist() for name, arr in stack.named_arrays()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_params(path: str | os.PathLike) -> LayerStackParams:
    """Read a checkpoint written by ``save_params``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format {doc.get('format')!r}")
    arch = doc["architecture"]
    arrays = {name: np.asarray(values, dtype=float) for name, values in doc["arrays"].items()}
    layers = []
    for i in range(len(arch["hidden_sizes"])):
        try:
            layers.append(
                LstmCellParams(
                    arrays[f"layers.{i}.w_in"],
                    arrays[f"layers.{i}.w_rec"],
                    arrays[f"layers.{i}.bias"],
                )
            )
        except KeyError as exc:
            raise ConfigError(f"checkpoint {path} is missing array {exc}") from exc
    stack = LayerStackParams(layers, arrays["head.w"], arrays["head.b"], arch["head"])
    stack.validate()
    if stack.hidden_sizes != list(arch["hidden_sizes"]) or stack.input_size != arch["input_size"]:
        raise ConfigError(f"checkpoint {path}: arrays disagree with architecture header")
    return stack
