"""Small feed-forward and recurrent building blocks.

Weights initialize uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)). Parameter
structures expose ``tensors()`` so models can assemble named checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


def init_linear(rng, n_in, n_out):
    bound = 1.0 / np.sqrt(n_in)
    w = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)
    b = Tensor(rng.uniform(-bound, bound, size=(n_out,)), requires_grad=True)
    return w, b


@dataclass
class MLP:
    """tanh hidden layers, linear output."""

    layers: list = field(default_factory=list)  # [(w, b), ...]

    def __call__(self, x):
        n = len(self.layers)
        for i, (w, b) in enumerate(self.layers):
            x = x @ w + b
            if i < n - 1:
                x = T.tanh(x)
        return x

    def tensors(self):
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"l{i}.w"] = w
            out[f"l{i}.b"] = b
        return out


def init_mlp(rng, sizes):
    return MLP([init_linear(rng, a, b) for a, b in zip(sizes, sizes[1:])])


@dataclass
class LSTMParams:
    w: Tensor  # (d_in + d_h, 4*d_h), gate order: input, forget, cell, output
    b: Tensor  # (4*d_h,)
    d_h: int

    def tensors(self):
        return {"w": self.w, "b": self.b}


def init_lstm(rng, d_in, d_h):
    w, b = init_linear(rng, d_in + d_h, 4 * d_h)
    return LSTMParams(w, b, d_h)


def lstm_cell(p, x, h, c):
    gates = T.concat([x, h], axis=1) @ p.w + p.b
    d = p.d_h
    i = T.sigmoid(gates[:, :d])
    f = T.sigmoid(gates[:, d:2 * d])
    g = T.tanh(gates[:, 2 * d:3 * d])
    o = T.sigmoid(gates[:, 3 * d:])
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


@dataclass
class GRUParams:
    wz: Tensor
    bz: Tensor
    wr: Tensor
    br: Tensor
    wh: Tensor
    bh: Tensor

    def tensors(self):
        return {"wz": self.wz, "bz": self.bz, "wr": self.wr, "br": self.br,
                "wh": self.wh, "bh": self.bh}


def init_gru(rng, d_in, d_h):
    wz, bz = init_linear(rng, d_in + d_h, d_h)
    wr, br = init_linear(rng, d_in + d_h, d_h)
    wh, bh = init_linear(rng, d_in + d_h, d_h)
    return GRUParams(wz, bz, wr, br, wh, bh)


def gru_cell(p, x, h):
    xh = T.concat([x, h], axis=1)
    z = T.sigmoid(xh @ p.wz + p.bz)
    r = T.sigmoid(xh @ p.wr + p.br)
    h_tilde = T.tanh(T.concat([x, r * h], axis=1) @ p.wh + p.bh)
    return (1.0 - z) * h + z * h_tilde


def named_tensors(struct, prefix):
    return {f"{prefix}.{k}": v for k, v in struct.tensors().items()}
