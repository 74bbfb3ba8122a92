"""LSTM cells, sequence runners, and multilayer perceptrons.

All functions are pure over a read-only ``ParameterStore``; batches are
2-d tensors ``[batch, features]`` and sequences are lists of such tensors.
Gate layout in the fused weight matrix is (input, forget, candidate,
output); the forget-gate bias is initialized to 1.0 as a stabilizer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, concat, matmul, mul, sigmoid, slice_axis, tanh
from .params import ParameterStore, RandomSource


def uniform_init(rng: RandomSource, shape, fan_in: int) -> np.ndarray:
    s = np.sqrt(1.0 / fan_in)
    return rng.uniform(shape, -s, s)


@dataclass(frozen=True)
class LstmSpec:
    input_dim: int
    hidden_dim: int = 512
    prefix: str = "lstm"

    @property
    def weight(self) -> str:
        return f"{self.prefix}.w"

    @property
    def bias(self) -> str:
        return f"{self.prefix}.b"


def init_lstm(store: ParameterStore, spec: LstmSpec, rng: RandomSource) -> None:
    fan_in = spec.input_dim + spec.hidden_dim
    store.add(spec.weight, uniform_init(rng, (fan_in, 4 * spec.hidden_dim), fan_in))
    b = np.zeros(4 * spec.hidden_dim)
    b[spec.hidden_dim:2 * spec.hidden_dim] = 1.0
    store.add(spec.bias, b)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, spec: LstmSpec,
              store: ParameterStore) -> tuple[Tensor, Tensor]:
    if x.shape[-1] != spec.input_dim or h.shape[-1] != spec.hidden_dim:
        raise ShapeError(
            f"lstm_step {spec.prefix}: x {x.shape}, h {h.shape} vs spec "
            f"({spec.input_dim}, {spec.hidden_dim})")
    hd = spec.hidden_dim
    z = matmul(concat([x, h], axis=1), store[spec.weight]) + store[spec.bias]
    i = sigmoid(slice_axis(z, 1, 0, hd))
    f = sigmoid(slice_axis(z, 1, hd, 2 * hd))
    g = tanh(slice_axis(z, 1, 2 * hd, 3 * hd))
    o = sigmoid(slice_axis(z, 1, 3 * hd, 4 * hd))
    c2 = mul(f, c) + mul(i, g)
    h2 = mul(o, tanh(c2))
    return h2, c2


def zero_state(spec: LstmSpec, batch: int) -> tuple[Tensor, Tensor]:
    z = np.zeros((batch, spec.hidden_dim))
    return Tensor(z), Tensor(z.copy())


def run_sequence(seq: list[Tensor], spec: LstmSpec, store: ParameterStore,
                 h: Tensor | None = None, c: Tensor | None = None) -> list[Tensor]:
    """Hidden state after each step; state defaults to zeros."""
    if not seq:
        raise ShapeError("run_sequence: empty sequence")
    if h is None or c is None:
        h, c = zero_state(spec, seq[0].shape[0])
    outputs = []
    for x in seq:
        h, c = lstm_step(x, h, c, spec, store)
        outputs.append(h)
    return outputs


def run_bidirectional(seq: list[Tensor], spec_fwd: LstmSpec, spec_bwd: LstmSpec,
                      store: ParameterStore) -> tuple[list[Tensor], list[Tensor]]:
    """Forward and backward hidden states, both indexed in original time order.

    ``backward[t]`` is the backward-direction state after consuming frames
    from the end down to (and including) frame ``t``; ``backward[0]`` is the
    final backward state.
    """
    fwd = run_sequence(seq, spec_fwd, store)
    bwd_rev = run_sequence(list(reversed(seq)), spec_bwd, store)
    return fwd, list(reversed(bwd_rev))


@dataclass(frozen=True)
class MlpSpec:
    layer_dims: tuple[int, ...]
    prefix: str = "mlp"
    out_activation: str = "identity"  # or "sigmoid"

    def weight(self, i: int) -> str:
        return f"{self.prefix}.l{i}.w"

    def bias(self, i: int) -> str:
        return f"{self.prefix}.l{i}.b"


def init_mlp(store: ParameterStore, spec: MlpSpec, rng: RandomSource) -> None:
    for i in range(len(spec.layer_dims) - 1):
        fan_in, fan_out = spec.layer_dims[i], spec.layer_dims[i + 1]
        store.add(spec.weight(i), uniform_init(rng, (fan_in, fan_out), fan_in))
        store.add(spec.bias(i), np.zeros(fan_out))


def mlp_forward(x: Tensor, spec: MlpSpec, store: ParameterStore) -> Tensor:
    if x.shape[-1] != spec.layer_dims[0]:
        raise ShapeError(f"mlp {spec.prefix}: input {x.shape} vs first layer {spec.layer_dims[0]}")
    n_layers = len(spec.layer_dims) - 1
    for i in range(n_layers):
        x = matmul(x, store[spec.weight(i)]) + store[spec.bias(i)]
        if i < n_layers - 1:
            x = tanh(x)
        elif spec.out_activation == "sigmoid":
            x = sigmoid(x)
    return x
