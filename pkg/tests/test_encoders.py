import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snodep import nn
from snodep.distributions import DiagNormal, LogNormalD
from snodep.encoders import (
    ContextSet,
    gru_ode_encode,
    gru_ode_encode_batch,
    init_latent_heads,
    latent_params,
    lstm_encode_backward,
    lstm_encode_backward_batch,
    np_encode,
    np_encode_batch,
)
from snodep.ode import SolverConfig
from snodep.tensor import DomainError, Tensor


def zero_field(t, h, ctx):
    return Tensor(np.zeros(h.shape))


class TestContextSet:
    def test_defaults_all_present(self):
        ctx = ContextSet(np.arange(3.0), np.zeros((3, 2)))
        assert ctx.present.all()

    def test_rejects_empty_and_unsorted(self):
        with pytest.raises(ValueError):
            ContextSet(np.arange(2.0), np.zeros((2, 1)), np.zeros(2, dtype=bool))
        with pytest.raises(ValueError):
            ContextSet(np.array([1.0, 0.0]), np.zeros((2, 1)))

    def test_rejects_value_shape_mismatch(self):
        with pytest.raises(ValueError):
            ContextSet(np.arange(3.0), np.zeros((2, 1)))


class TestMeanEncoder:
    rng = np.random.default_rng(0)
    params = nn.init_mlp(rng, [3, 5, 4])

    def test_permutation_invariance(self):
        times = np.array([0.0, 1.0, 2.0, 3.0])
        values = self.rng.normal(size=(1, 4, 2))
        mask = np.ones((1, 4), dtype=bool)
        r = np_encode_batch(times, values, mask, self.params)
        perm = np.array([2, 0, 3, 1])
        r_p = np_encode_batch(times[perm], values[:, perm], mask, self.params)
        np.testing.assert_allclose(r.values, r_p.values, atol=1e-12)

    def test_masked_mean_equals_subset(self):
        times = np.arange(4.0)
        values = self.rng.normal(size=(1, 4, 2))
        mask = np.array([[True, False, True, False]])
        r = np_encode_batch(times, values, mask, self.params)
        sub = np_encode_batch(times[[0, 2]], values[:, [0, 2]],
                              np.ones((1, 2), dtype=bool), self.params)
        np.testing.assert_allclose(r.values, sub.values, atol=1e-12)

    def test_single_point_context(self):
        ctx = ContextSet(np.array([0.5]), self.rng.normal(size=(1, 2)))
        r = np_encode(ctx, self.params)
        assert r.shape == (4,)

    def test_all_masked_row_rejected(self):
        with pytest.raises(DomainError):
            np_encode_batch(np.arange(2.0), np.zeros((1, 2, 2)),
                            np.zeros((1, 2), dtype=bool), self.params)

    def test_batch_rows_independent(self):
        times = np.arange(3.0)
        values = self.rng.normal(size=(4, 3, 2))
        mask = np.ones((4, 3), dtype=bool)
        r = np_encode_batch(times, values, mask, self.params)
        r1 = np_encode_batch(times, values[1:2], mask[1:2], self.params)
        np.testing.assert_allclose(r.values[1], r1.values[0], atol=1e-12)


class TestLstmEncoder:
    rng = np.random.default_rng(1)
    params = nn.init_lstm(rng, 2, 5)

    def test_matches_manual_backward_unroll(self):
        values = self.rng.normal(size=(1, 3, 2))
        r = lstm_encode_backward_batch(np.arange(3.0), values,
                                       np.ones((1, 3), dtype=bool), self.params)
        h = Tensor(np.zeros((1, 5)))
        c = Tensor(np.zeros((1, 5)))
        for i in (2, 1, 0):
            h, c = nn.lstm_cell(self.params, Tensor(values[:, i, :]), h, c)
        np.testing.assert_allclose(r.values, h.values, atol=1e-12)

    def test_order_sensitivity(self):
        values = self.rng.normal(size=(1, 3, 2))
        mask = np.ones((1, 3), dtype=bool)
        r = lstm_encode_backward_batch(np.arange(3.0), values, mask, self.params)
        r_rev = lstm_encode_backward_batch(np.arange(3.0), values[:, ::-1], mask,
                                           self.params)
        assert not np.allclose(r.values, r_rev.values)

    def test_rejects_masked_points(self):
        mask = np.array([[True, False, True]])
        with pytest.raises(DomainError):
            lstm_encode_backward_batch(np.arange(3.0), np.zeros((1, 3, 2)), mask,
                                       self.params)

    def test_single_sequence_wrapper(self):
        ctx = ContextSet(np.arange(3.0), self.rng.normal(size=(3, 2)))
        assert lstm_encode_backward(ctx, self.params).shape == (5,)


class TestGruOdeEncoder:
    rng = np.random.default_rng(2)
    gru = nn.init_gru(rng, 2, 5)
    cfg = SolverConfig("euler", 3)

    def _g_mlp_field(self):
        g = nn.init_mlp(self.rng, [5, 4, 5])
        return lambda t, h, ctx: g(h)

    def test_zero_field_equals_backward_gru(self):
        values = self.rng.normal(size=(4, 2))
        ctx = ContextSet(np.arange(4.0), values)
        r = gru_ode_encode(ctx, zero_field, self.gru, self.cfg)
        h = Tensor(np.zeros((1, 5)))
        for i in (3, 2, 1, 0):
            h = nn.gru_cell(self.gru, Tensor(values[i][None, :]), h)
        np.testing.assert_allclose(r.values, h.values[0], atol=1e-10)

    def test_batched_matches_single(self):
        g_field = self._g_mlp_field()
        values = self.rng.normal(size=(3, 5, 2))
        mask = np.array([[True, True, True, True, True],
                         [True, False, True, False, True],
                         [True, True, False, True, False]])
        r = gru_ode_encode_batch(np.arange(5.0), values, mask, g_field, self.gru,
                                 self.cfg)
        for b in range(3):
            ctx = ContextSet(np.arange(5.0), values[b], mask[b])
            single = gru_ode_encode(ctx, g_field, self.gru, self.cfg)
            np.testing.assert_allclose(r.values[b], single.values, atol=1e-10)

    def test_masked_points_are_skipped(self):
        g_field = self._g_mlp_field()
        values = self.rng.normal(size=(1, 4, 2))
        mask = np.array([[True, False, True, False]])
        r = gru_ode_encode_batch(np.arange(4.0), values, mask, g_field, self.gru,
                                 self.cfg)
        garbage = values.copy()
        garbage[:, [1, 3]] = 99.0
        r2 = gru_ode_encode_batch(np.arange(4.0), garbage, mask, g_field, self.gru,
                                  self.cfg)
        np.testing.assert_allclose(r.values, r2.values, atol=1e-12)

    def test_requires_two_present_points(self):
        ctx = ContextSet(np.arange(3.0), np.zeros((3, 2)),
                         np.array([True, False, False]))
        with pytest.raises(ValueError):
            gru_ode_encode(ctx, zero_field, self.gru, self.cfg)

    def test_batch_requires_first_timestep(self):
        mask = np.array([[False, True, True]])
        with pytest.raises(DomainError):
            gru_ode_encode_batch(np.arange(3.0), np.zeros((1, 3, 2)), mask,
                                 zero_field, self.gru, self.cfg)


class TestLatentHeads:
    rng = np.random.default_rng(3)
    heads = init_latent_heads(rng, 6, 4, 3)

    def test_shapes_and_families(self):
        r = Tensor(self.rng.normal(size=(2, 6)))
        l0, d = latent_params(r, self.heads, "normal")
        assert isinstance(l0, DiagNormal) and isinstance(d, DiagNormal)
        assert l0.mu.shape == (2, 4) and d.mu.shape == (2, 3)
        assert np.all(l0.sigma.values > 0) and np.all(d.sigma.values > 0)
        l0, d = latent_params(r, self.heads, "lognormal")
        assert isinstance(l0, LogNormalD) and isinstance(d, LogNormalD)

    def test_one_dim_input_lifted(self):
        r = Tensor(self.rng.normal(size=6))
        l0, _ = latent_params(r, self.heads, "normal")
        assert l0.mu.shape == (1, 4)

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            latent_params(Tensor(np.zeros((1, 6))), self.heads, "gamma")

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 5))
    def test_batch_rows_independent(self, b):
        r = np.random.default_rng(b).normal(size=(b, 6))
        l0, _ = latent_params(Tensor(r), self.heads, "normal")
        l0_first, _ = latent_params(Tensor(r[:1]), self.heads, "normal")
        np.testing.assert_allclose(l0.mu.values[0], l0_first.mu.values[0], atol=1e-12)
