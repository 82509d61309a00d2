"""LSTM cell, bidirectional layer, and k-layer stacking on the autodiff tape.

Standard four-gate formulation without peepholes:

    i = sigmoid(W_i x + U_i h_prev + b_i)      f, o analogous
    g = tanh(W_g x + U_g h_prev + b_g)
    c = f * c_prev + i * g
    h = o * tanh(c)

Initial hidden and cell states are zero vectors. Weight matrices are
Glorot-uniform, biases zero except the forget-gate bias which starts at 1.0.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tape, Tensor
from .errors import ShapeError

GATES = ("input", "forget", "output", "candidate")


def name_keyed_rng(seed: int):
    """Return rng_for(name): an RNG stream derived from (seed, name).

    Keying streams by parameter name makes initial weights independent of
    creation order, so models that share components initialize identically.
    """

    def rng_for(name: str) -> np.random.Generator:
        return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])

    return rng_for


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class LstmParams:
    """Per-gate weights of one directional LSTM cell."""

    input_size: int
    hidden_size: int
    w: dict[str, Parameter]  # gate -> (hidden, input) matrix
    u: dict[str, Parameter]  # gate -> (hidden, hidden) matrix
    b: dict[str, Parameter]  # gate -> (hidden, 1) bias

    def parameters(self) -> list[Parameter]:
        out = []
        for gate in GATES:
            out.extend((self.w[gate], self.u[gate], self.b[gate]))
        return out


def init_lstm_params(prefix: str, input_size: int, hidden_size: int, rng_for) -> LstmParams:
    """Create gate parameters named ``{prefix}.W_input`` etc."""
    w, u, b = {}, {}, {}
    for gate in GATES:
        w_name = f"{prefix}.W_{gate}"
        u_name = f"{prefix}.U_{gate}"
        b_name = f"{prefix}.b_{gate}"
        w[gate] = Parameter(w_name, glorot_uniform(rng_for(w_name), hidden_size, input_size))
        u[gate] = Parameter(u_name, glorot_uniform(rng_for(u_name), hidden_size, hidden_size))
        bias = np.full((hidden_size, 1), 1.0) if gate == "forget" else np.zeros((hidden_size, 1))
        b[gate] = Parameter(b_name, bias)
    return LstmParams(input_size, hidden_size, w, u, b)


def lstm_step(tape: Tape, x: Tensor, h_prev: Tensor, c_prev: Tensor,
              params: LstmParams) -> tuple[Tensor, Tensor]:
    """One LSTM cell update; returns (h, c)."""
    if x.data.shape != (params.input_size, 1):
        raise ShapeError(
            f"lstm_step: input shape {x.data.shape} != ({params.input_size}, 1)"
        )
    expect = (params.hidden_size, 1)
    if h_prev.data.shape != expect or c_prev.data.shape != expect:
        raise ShapeError(
            f"lstm_step: state shapes {h_prev.data.shape}/{c_prev.data.shape} != {expect}"
        )

    def gate(name: str) -> Tensor:
        return tape.gate_affine(
            tape.param(params.w[name]), x,
            tape.param(params.u[name]), h_prev,
            tape.param(params.b[name]),
        )

    i = tape.sigmoid(gate("input"))
    f = tape.sigmoid(gate("forget"))
    o = tape.sigmoid(gate("output"))
    g = tape.tanh(gate("candidate"))
    c = tape.add(tape.mul(f, c_prev), tape.mul(i, g))
    h = tape.mul(o, tape.tanh(c))
    return h, c


def _run_direction(tape: Tape, inputs: list[Tensor], params: LstmParams) -> list[Tensor]:
    zeros = np.zeros((params.hidden_size, 1))
    h = tape.const(zeros)
    c = tape.const(zeros)
    outputs = []
    for x in inputs:
        h, c = lstm_step(tape, x, h, c, params)
        outputs.append(h)
    return outputs


def run_bilstm_layer(tape: Tape, inputs: list[Tensor], fwd: LstmParams,
                     bwd: LstmParams) -> list[Tensor]:
    """Independent left-to-right and right-to-left passes, concatenated.

    Output t is [h_fwd(t) ; h_bwd(t)], length 2 * hidden_size per position.
    """
    if not inputs:
        raise ShapeError("run_bilstm_layer: empty input sequence")
    width = inputs[0].data.shape
    for x in inputs[1:]:
        if x.data.shape != width:
            raise ShapeError(
                f"run_bilstm_layer: inconsistent input widths {width} vs {x.data.shape}"
            )
    hs_fwd = _run_direction(tape, inputs, fwd)
    hs_bwd = _run_direction(tape, inputs[::-1], bwd)[::-1]
    return [tape.concat([hf, hb]) for hf, hb in zip(hs_fwd, hs_bwd)]


def stack_forward(tape: Tape, inputs: list[Tensor],
                  layers: list[tuple[LstmParams, LstmParams]]) -> list[list[Tensor]]:
    """Run stacked bi-LSTM layers; layer i feeds layer i+1.

    Returns every layer's full output sequence so prediction heads can
    attach at any depth.
    """
    outputs = []
    current = inputs
    for fwd, bwd in layers:
        current = run_bilstm_layer(tape, current, fwd, bwd)
        outputs.append(current)
    return outputs
