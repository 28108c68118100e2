"""Context encoders: order-invariant mean aggregation, backward LSTM, and
backward GRU-ODE, plus the feed-forward heads that parameterize the latents.

Batched variants operate on shared timesteps with a per-element presence mask
and are what training uses; the ``ContextSet`` forms wrap a single sequence.
The GRU-ODE consumes each present observation at its own time and evolves the
hidden state by integrating the field between consecutive present times,
skipping masked points entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .distributions import DiagNormal, LogNormalD, positive_sigma
from .ode import integrate
from .tensor import DomainError, Tensor


@dataclass
class ContextSet:
    times: np.ndarray          # (C,)
    values: np.ndarray         # (C, d_y)
    present: np.ndarray = None  # (C,) bool; default all present

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.present is None:
            self.present = np.ones(len(self.times), dtype=bool)
        self.present = np.asarray(self.present, dtype=bool)
        if self.values.ndim != 2 or self.values.shape[0] != self.times.shape[0]:
            raise ValueError(
                f"context values shape {self.values.shape} does not match "
                f"{self.times.shape[0]} timesteps"
            )
        if self.present.sum() < 1:
            raise ValueError("context needs at least one present point")
        pt = self.times[self.present]
        if np.any(np.diff(pt) <= 0):
            raise ValueError("context times must be strictly ascending among present points")


def _time_column(t, batch):
    return Tensor(np.full((batch, 1), t))


def np_encode_batch(times, values, mask, params):
    """Masked mean of MLP([t_i, y_i]) over present points. values: (B, C, d_y)."""
    b, c, _ = values.shape
    acc = None
    for i in range(c):
        x = T.concat([_time_column(times[i], b), Tensor(values[:, i, :])], axis=1)
        h = params(x)
        m = Tensor(mask[:, i:i + 1].astype(np.float64))
        contrib = m * h
        acc = contrib if acc is None else acc + contrib
    counts = mask.sum(axis=1, keepdims=True).astype(np.float64)
    if np.any(counts == 0):
        raise DomainError("np_encode: an element has no present context points")
    return acc / Tensor(counts)


def np_encode(ctx, params):
    r = np_encode_batch(ctx.times, ctx.values[None], ctx.present[None], params)
    return r[0, :]


def lstm_encode_backward_batch(times, values, mask, params):
    """Backward LSTM over all points; requires a fully present mask."""
    if not np.all(mask):
        raise DomainError("lstm encoder assumes regular sampling; use the gruode encoder")
    b, c, _ = values.shape
    h = Tensor(np.zeros((b, params.d_h)))
    cell = Tensor(np.zeros((b, params.d_h)))
    for i in range(c - 1, -1, -1):
        h, cell = nn.lstm_cell(params, Tensor(values[:, i, :]), h, cell)
    return h


def lstm_encode_backward(ctx, params):
    r = lstm_encode_backward_batch(ctx.times, ctx.values[None], ctx.present[None], params)
    return r[0, :]


def gru_ode_encode(ctx, g_field, params, cfg):
    """Backward GRU-ODE over the present points of one sequence."""
    idx = np.flatnonzero(ctx.present)
    if idx.size < 2:
        raise ValueError("gru_ode_encode needs at least 2 present points")
    d_h = params.bz.shape[0]
    h = Tensor(np.zeros((1, d_h)))
    desc = idx[::-1]
    prev_t = None
    for i in desc:
        t_i = float(ctx.times[i])
        if prev_t is not None:
            h = integrate(g_field, h, prev_t, t_i, None, cfg)
        h = nn.gru_cell(params, Tensor(ctx.values[i][None, :]), h)
        prev_t = t_i
    return h[0, :]


def gru_ode_encode_batch(times, values, mask, g_field, params, cfg):
    """Batched backward GRU-ODE with per-element masks.

    Requires every element present at index 0, so the pass ends exactly at the
    earliest observation; the hidden state is zeroed at each element's first
    (latest-in-time) jump so integration before it cannot leak in.
    """
    if not np.all(mask[:, 0]):
        raise DomainError("gru_ode_encode_batch requires the first timestep present")
    b, c, _ = values.shape
    d_h = params.bz.shape[0]
    h = Tensor(np.zeros((b, d_h)))
    started = np.zeros(b, dtype=bool)
    for i in range(c - 1, -1, -1):
        if i < c - 1:
            h = integrate(g_field, h, float(times[i + 1]), float(times[i]), None, cfg)
        pres = mask[:, i]
        if not np.any(pres):
            continue
        h_pre = Tensor(started[:, None].astype(np.float64)) * h
        h_jump = nn.gru_cell(params, Tensor(values[:, i, :]), h_pre)
        m = Tensor(pres[:, None].astype(np.float64))
        h = m * h_jump + (1.0 - m) * h
        started = started | pres
    return h


@dataclass
class LatentHeads:
    """Linear map r -> (mu_L0, sigma_raw_L0, mu_D, sigma_raw_D)."""

    w: Tensor
    b: Tensor
    d_z: int
    d_d: int

    def tensors(self):
        return {"w": self.w, "b": self.b}


def init_latent_heads(rng, d_r, d_z, d_d):
    w, b = nn.init_linear(rng, d_r, 2 * d_z + 2 * d_d)
    return LatentHeads(w, b, d_z, d_d)


def latent_params(r, heads, family):
    """Latent distributions from a representation; family 'normal' or 'lognormal'."""
    if family not in ("normal", "lognormal"):
        raise ValueError(f"unknown latent family {family!r}")
    if r.values.ndim == 1:
        r = T.reshape(r, (1, r.values.shape[0]))
    out = r @ heads.w + heads.b
    dz, dd = heads.d_z, heads.d_d
    mu_l0 = out[:, :dz]
    sig_l0 = positive_sigma(out[:, dz:2 * dz])
    mu_d = out[:, 2 * dz:2 * dz + dd]
    sig_d = positive_sigma(out[:, 2 * dz + dd:])
    dist_cls = DiagNormal if family == "normal" else LogNormalD
    return dist_cls(mu_l0, sig_l0), dist_cls(mu_d, sig_d)
