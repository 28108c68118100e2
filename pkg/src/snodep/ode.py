"""Fixed-step explicit ODE integration on the gradient tape.

A vector field is any callable ``f(t, state, ctx) -> Tensor`` returning a
derivative with the same shape as ``state``. Integration composes ordinary
tensor primitives, so gradients flow through trajectories without an adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import NumericsError, ShapeError, Tensor


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    steps_per_unit: int = 10

    def __post_init__(self):
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"solver method must be 'euler' or 'rk4', got {self.method!r}")
        if self.steps_per_unit < 1:
            raise ValueError("steps_per_unit must be >= 1")


def _eval_field(f, t, y, ctx):
    dy = f(t, y, ctx)
    if dy.shape != y.shape:
        raise ShapeError(f"vector field returned shape {dy.shape}, state has {y.shape}")
    return dy


def integrate(f, y0, t0, t1, ctx, cfg):
    """Advance ``y0`` from ``t0`` to ``t1`` (either direction) and return y(t1)."""
    if t0 == t1:
        return y0
    n = max(1, int(round(abs(t1 - t0) * cfg.steps_per_unit)))
    h = (t1 - t0) / n
    y = y0
    for i in range(n):
        t = t0 + i * h
        if cfg.method == "euler":
            y = y + h * _eval_field(f, t, y, ctx)
        else:
            k1 = _eval_field(f, t, y, ctx)
            k2 = _eval_field(f, t + 0.5 * h, y + (0.5 * h) * k1, ctx)
            k3 = _eval_field(f, t + 0.5 * h, y + (0.5 * h) * k2, ctx)
            k4 = _eval_field(f, t + h, y + h * k3, ctx)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y.values)):
            raise NumericsError(f"non-finite state at integration step {i} (t={t + h:g})")
    return y


def integrate_path(f, y0, times, ctx, cfg):
    """States at each of ``times``; ``times[0]`` is the initial time of ``y0``."""
    times = list(times)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"integrate_path: times must be strictly ascending, got {times}")
    states = [y0]
    y = y0
    for a, b in zip(times, times[1:]):
        y = integrate(f, y, a, b, ctx, cfg)
        states.append(y)
    return states


def linear_field(matrix):
    """Vector field y' = y @ A^T for a constant matrix A; handy in tests."""
    a_t = Tensor(np.asarray(matrix, dtype=np.float64).T)

    def f(t, y, ctx):
        return y @ a_t

    return f
