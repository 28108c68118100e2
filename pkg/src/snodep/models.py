"""The four model variants assembled from encoder, latent heads, and decoder.

kind        encoder   decoder
----        -------   -------
np          mean      feed-forward in (l0, d, t)
nodep       mean      neural-ODE latent evolution
snodep      lstm      neural-ODE latent evolution
snodep_gruode  gruode neural-ODE latent evolution
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import encoders, nn
from . import tensor as T
from .distributions import DiagNormal, PoissonD, positive_rate, positive_sigma
from .encoders import ContextSet
from .ode import SolverConfig, integrate_path
from .tensor import Tensor

KINDS = ("np", "nodep", "snodep", "snodep_gruode")
ENCODER_FOR_KIND = {"np": "mean", "nodep": "mean", "snodep": "lstm",
                    "snodep_gruode": "gruode"}


@dataclass
class ModelConfig:
    kind: str
    d_y: int
    head: str = "poisson"            # poisson | gaussian
    latent_family: str = "lognormal"  # lognormal | normal
    d_r: int = 64
    d_z: int = 32
    d_d: int = 32
    hidden: int = 64
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    encode_time: bool = False  # append t to recurrent encoder inputs

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.head not in ("poisson", "gaussian"):
            raise ValueError(f"unknown head {self.head!r}")
        if self.latent_family not in ("normal", "lognormal"):
            raise ValueError(f"unknown latent family {self.latent_family!r}")


@dataclass
class LatentDraw:
    l0: Tensor
    d: Tensor
    l0_dist: object = None
    d_dist: object = None


class ProcessModel:
    def __init__(self, cfg: ModelConfig, seed=0):
        self.cfg = cfg
        self.encoder_kind = ENCODER_FOR_KIND[cfg.kind]
        rng = np.random.default_rng(seed)
        d_in = cfg.d_y + (1 if cfg.encode_time else 0)

        self.enc_mlp = None
        self.lstm = None
        self.gru = None
        self.g_mlp = None
        if self.encoder_kind == "mean":
            self.enc_mlp = nn.init_mlp(rng, [1 + cfg.d_y, cfg.hidden, cfg.d_r])
        elif self.encoder_kind == "lstm":
            self.lstm = nn.init_lstm(rng, d_in, cfg.d_r)
        else:
            self.gru = nn.init_gru(rng, d_in, cfg.d_r)
            self.g_mlp = nn.init_mlp(rng, [cfg.d_r, cfg.hidden, cfg.d_r])

        self.heads = encoders.init_latent_heads(rng, cfg.d_r, cfg.d_z, cfg.d_d)
        # shared trunk: f_theta for ODE kinds, the per-time decoder for np
        self.trunk = nn.init_mlp(
            rng, [cfg.d_z + cfg.d_d + 1, cfg.hidden, cfg.hidden, cfg.d_z])
        out_dim = cfg.d_y if cfg.head == "poisson" else 2 * cfg.d_y
        self.out_head = nn.init_mlp(rng, [cfg.d_z, cfg.hidden, out_dim])

    # ---- parameters ----
    def parameters(self):
        out = {}
        if self.enc_mlp is not None:
            out.update(nn.named_tensors(self.enc_mlp, "encoder"))
        if self.lstm is not None:
            out.update(nn.named_tensors(self.lstm, "encoder"))
        if self.gru is not None:
            out.update(nn.named_tensors(self.gru, "encoder"))
        if self.g_mlp is not None:
            out.update(nn.named_tensors(self.g_mlp, "g_field"))
        out.update(nn.named_tensors(self.heads, "latent_heads"))
        out.update(nn.named_tensors(self.trunk, "trunk"))
        out.update(nn.named_tensors(self.out_head, "out_head"))
        return out

    # ---- encoding ----
    def encode_batch(self, times, values, mask):
        """values: (B, C, d_y) array, mask: (B, C) bool -> (L0 dist, D dist)."""
        values = np.asarray(values, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if self.cfg.encode_time and self.encoder_kind != "mean":
            t_feat = np.broadcast_to(np.asarray(times)[None, :, None],
                                     values.shape[:2] + (1,))
            values = np.concatenate([values, t_feat], axis=2)
        if self.encoder_kind == "mean":
            r = encoders.np_encode_batch(times, values, mask, self.enc_mlp)
        elif self.encoder_kind == "lstm":
            r = encoders.lstm_encode_backward_batch(times, values, mask, self.lstm)
        else:
            r = encoders.gru_ode_encode_batch(
                times, values, mask, self._g_field, self.gru, self.cfg.solver)
        return encoders.latent_params(r, self.heads, self.cfg.latent_family)

    def encode(self, ctx: ContextSet):
        return self.encode_batch(ctx.times, ctx.values[None], ctx.present[None])

    def _g_field(self, t, h, ctx):
        return self.g_mlp(h)

    # ---- decoding ----
    def _field(self, t, l, d):
        b = l.values.shape[0]
        t_col = Tensor(np.full((b, 1), t))
        return self.trunk(T.concat([l, d, t_col], axis=1))

    def _head_dist(self, latent):
        out = self.out_head(latent)
        if self.cfg.head == "poisson":
            return PoissonD(positive_rate(out))
        d_y = self.cfg.d_y
        return DiagNormal(out[:, :d_y], positive_sigma(out[:, d_y:]))

    def decode_batch(self, l0, d, t0, query_times):
        """Per-time output distributions at ``query_times`` (ascending, >= t0)."""
        query_times = [float(t) for t in query_times]
        if any(b <= a for a, b in zip(query_times, query_times[1:])):
            raise ValueError(f"query times must be strictly ascending: {query_times}")
        if query_times and query_times[0] < t0:
            raise ValueError(
                f"query time {query_times[0]} precedes the process origin {t0}")
        if self.cfg.kind == "np":
            b = l0.values.shape[0]
            dists = []
            for t in query_times:
                x = T.concat([l0, d, Tensor(np.full((b, 1), t))], axis=1)
                dists.append(self._head_dist(self.trunk(x)))
            return dists

        def f(t, l, ctx):
            return self._field(t, l, ctx)

        if not query_times:
            return []
        prepend = query_times[0] != t0
        path_times = [t0] + query_times if prepend else query_times
        states = integrate_path(f, l0, path_times, d, self.cfg.solver)
        if prepend:
            states = states[1:]
        return [self._head_dist(s) for s in states]

    def decode(self, draw: LatentDraw, query_times, t0=None):
        if t0 is None:
            t0 = float(query_times[0])
        return self.decode_batch(draw.l0, draw.d, t0, query_times)

    # ---- inference ----
    def predict_batch(self, times, values, mask, query_times):
        """Deterministic inference: posterior-mean latents from the context."""
        l0_dist, d_dist = self.encode_batch(times, values, mask)
        zero_l0 = Tensor(np.zeros(l0_dist.mu.shape))
        zero_d = Tensor(np.zeros(d_dist.mu.shape))
        l0 = l0_dist.sample(zero_l0)
        d = d_dist.sample(zero_d)
        t0 = float(np.asarray(times)[0])
        return self.decode_batch(l0, d, t0, query_times)

    def predict(self, ctx: ContextSet, query_times):
        return self.predict_batch(ctx.times, ctx.values[None], ctx.present[None],
                                  query_times)
