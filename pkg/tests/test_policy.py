import math
import time

import numpy as np
import pytest

from quadfoundry.policy import (PolicyGRU, export_policy, flop_count,
                                load_policy, param_count)
from quadfoundry.distill import mse_loss, mse_loss_and_grad
from test_nets import assert_grads_close


def reference_forward(policy: PolicyGRU, obs, h):
    """Straight-line scalar reimplementation of one step (independent oracle)."""
    H = policy.hidden

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    x = [math.tanh(sum(obs[k] * policy.W_in[k, j] for k in range(policy.obs_dim))
                   + policy.b_in[j]) for j in range(H)]
    gi = [sum(x[k] * policy.W_ih[k, j] for k in range(H)) + policy.b_ih[j]
          for j in range(3 * H)]
    gh = [sum(h[k] * policy.W_hh[k, j] for k in range(H)) + policy.b_hh[j]
          for j in range(3 * H)]
    z = [sig(gi[j] + gh[j]) for j in range(H)]
    r = [sig(gi[H + j] + gh[H + j]) for j in range(H)]
    n = [math.tanh(gi[2 * H + j] + r[j] * gh[2 * H + j]) for j in range(H)]
    h_new = [(1 - z[j]) * n[j] + z[j] * h[j] for j in range(H)]
    y = [sum(h_new[k] * policy.W_out[k, j] for k in range(H)) + policy.b_out[j]
         for j in range(policy.act_dim)]
    act = [0.5 * (math.tanh(v) + 1.0) for v in y]
    return np.array(act), np.array(h_new)


class TestParamCount:
    def test_default_architecture_is_2084(self):
        assert param_count(16, 22, 4) == 2084
        assert 22 * 16 + 16 == 368
        assert 16 * 16 * 3 * 2 + 16 * 3 * 2 + 16 == 1648
        assert 16 * 4 + 4 == 68

    def test_minimal_hand_count(self):
        assert param_count(1, obs_dim=1, act_dim=1) == 17

    def test_teacher_size_hidden_is_over_three_times_larger(self):
        assert param_count(64, 22, 4) > 3 * param_count(16, 22, 4)

    def test_matches_materialized_parameters(self, rng):
        for h in (1, 3, 16, 24):
            p = PolicyGRU(h, rng=rng)
            assert p.n_params() == param_count(h)


class TestFlopCount:
    def test_documented_formula(self):
        for h, o, a in [(16, 22, 4), (4, 22, 4), (8, 10, 2)]:
            expected = 2 * o * h + 2 * h + 12 * h * h + 17 * h + 2 * h * a + 4 * a
            assert flop_count(h, o, a) == expected

    def test_recurrent_term_quadruples_when_hidden_doubles(self):
        def recurrent(h):
            o, a = 22, 4
            return flop_count(h, o, a) - (2 * o * h + 2 * h) - (2 * h * a + 4 * a) - 17 * h
        for h in (4, 8, 16):
            assert recurrent(2 * h) == 4 * recurrent(h)

    def test_at_least_twice_param_count(self):
        for h in (4, 16, 64):
            assert flop_count(h) >= 2 * param_count(h) - 8

    def test_deterministic_constant(self):
        assert flop_count(16) == flop_count(16)
        assert flop_count(16, 22, 4) == 4224


class TestForward:
    def test_zero_network_outputs_one_half(self):
        p = PolicyGRU(16)
        act, h = p.forward(np.zeros(22), p.reset_hidden())
        np.testing.assert_array_equal(act, 0.5)
        np.testing.assert_array_equal(h, 0.0)

    def test_matches_straight_line_reference(self, rng):
        p = PolicyGRU(8, rng=rng, dtype=np.float64)
        h = p.reset_hidden()
        obs = rng.normal(size=22)
        for _ in range(5):
            act, h_new = p.forward(obs, h)
            act_ref, h_ref = reference_forward(p, obs, h)
            np.testing.assert_allclose(act, act_ref, atol=1e-12)
            np.testing.assert_allclose(h_new, h_ref, atol=1e-12)
            h = h_new
            obs = rng.normal(size=22)

    def test_hidden_bounded_by_gate_saturation(self, rng):
        p = PolicyGRU(16, rng=np.random.default_rng(8))
        h = p.reset_hidden()
        obs = 5.0 * rng.normal(size=22)
        for _ in range(500):
            act, h = p.forward(obs, h)
            assert np.max(np.abs(h)) < 1.0
            assert np.all((act >= 0) & (act <= 1))

    def test_learnable_initial_hidden_restored_by_reset(self, rng):
        p = PolicyGRU(4, rng=rng)
        p.h0 = np.array([0.1, -0.2, 0.3, 0.0], dtype=np.float32)
        np.testing.assert_array_equal(p.reset_hidden(), p.h0)
        np.testing.assert_array_equal(p.reset_hidden(3),
                                      np.tile(p.h0, (3, 1)))

    def test_nonfinite_observation_faults(self):
        p = PolicyGRU(4)
        with pytest.raises(FloatingPointError):
            p.forward(np.full(22, np.nan), p.reset_hidden())

    def test_sequence_matches_stepwise(self, rng):
        p = PolicyGRU(6, rng=rng, dtype=np.float64)
        obs = rng.normal(size=(9, 2, 22))
        acts, hiddens = p.forward_sequence(obs)
        h = p.reset_hidden(2)
        for t in range(9):
            a_t, h = p.step(obs[t], h)
            np.testing.assert_array_equal(acts[t], a_t)
            np.testing.assert_array_equal(hiddens[t], h)


class TestBPTT:
    def _loss_through(self, policy, obs, labels, mask, truncation=None):
        actions, _, caches = policy.forward_sequence(obs, want_cache=True)
        loss, dact = mse_loss_and_grad(actions, labels, mask)
        grads = policy.backward_sequence(caches, dact, truncation=truncation)
        return loss, grads

    def test_gradients_match_finite_differences(self, rng):
        policy = PolicyGRU(4, rng=rng, dtype=np.float64)
        T, B = 20, 3
        obs = rng.normal(size=(T, B, 22))
        labels = rng.uniform(0, 1, (T, B, 4))
        mask = (rng.random((T, B)) < 0.9).astype(float)

        _, grads = self._loss_through(policy, obs, labels, mask)

        def loss_fn():
            actions, _ = policy.forward_sequence(obs)
            return mse_loss(actions, labels, mask)

        h = 1e-6
        for p_arr, g_arr in zip(policy.parameters(), grads):
            numeric = np.zeros_like(p_arr)
            for i in range(p_arr.size):
                orig = p_arr.flat[i]
                p_arr.flat[i] = orig + h
                lp = loss_fn()
                p_arr.flat[i] = orig - h
                lm = loss_fn()
                p_arr.flat[i] = orig
                numeric.flat[i] = (lp - lm) / (2 * h)
            scale = np.maximum(np.abs(numeric), 1e-6)
            assert np.all(np.abs(g_arr - numeric) / scale < 1e-4), \
                f"BPTT grad mismatch, max rel {np.max(np.abs(g_arr - numeric) / scale):.2e}"

    def test_full_truncation_equals_no_truncation(self, rng):
        policy = PolicyGRU(4, rng=rng, dtype=np.float64)
        obs = rng.normal(size=(3, 2, 22))
        labels = rng.uniform(0, 1, (3, 2, 4))
        mask = np.ones((3, 2))
        _, g_full = self._loss_through(policy, obs, labels, mask, truncation=None)
        _, g_trunc3 = self._loss_through(policy, obs, labels, mask, truncation=3)
        for a, b in zip(g_full, g_trunc3):
            np.testing.assert_array_equal(a, b)

    def test_truncation_stops_gradient_flow(self, rng):
        policy = PolicyGRU(4, rng=rng, dtype=np.float64)
        obs = rng.normal(size=(8, 2, 22))
        labels = rng.uniform(0, 1, (8, 2, 4))
        mask = np.ones((8, 2))
        _, g_full = self._loss_through(policy, obs, labels, mask)
        _, g_trunc = self._loss_through(policy, obs, labels, mask, truncation=2)
        diffs = [np.max(np.abs(a - b)) for a, b in zip(g_full, g_trunc)]
        assert max(diffs) > 0  # shorter credit assignment changes gradients

    def test_initial_hidden_receives_gradient_only_from_first_chunk(self, rng):
        policy = PolicyGRU(4, rng=rng, dtype=np.float64)
        obs = rng.normal(size=(6, 1, 22))
        labels = rng.uniform(0, 1, (6, 1, 4))
        mask = np.zeros((6, 1))
        mask[5] = 1.0  # loss only at the last step
        _, g = self._loss_through(policy, obs, labels, mask, truncation=2)
        h0_grad = g[policy.PARAM_NAMES.index("h0")]
        np.testing.assert_array_equal(h0_grad, 0.0)  # last chunk never reaches t=0


class TestExport:
    def test_round_trip_outputs_bit_exact(self, tmp_path, rng):
        p = PolicyGRU(16, rng=rng)
        path = tmp_path / "p.bin"
        export_policy(p, path)
        q = load_policy(path)
        h_p, h_q = p.reset_hidden(), q.reset_hidden()
        for _ in range(100):
            obs = rng.normal(size=22)
            a_p, h_p = p.forward(obs, h_p)
            a_q, h_q = q.forward(obs, h_q)
            np.testing.assert_array_equal(a_p, a_q)

    def test_reexport_identical_bytes(self, tmp_path, rng):
        p = PolicyGRU(16, rng=rng)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        export_policy(p, a)
        export_policy(load_policy(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_file_size_matches_parameter_count(self, tmp_path, rng):
        p = PolicyGRU(16, rng=rng)
        path = tmp_path / "p.bin"
        export_policy(p, path)
        assert path.stat().st_size == 20 + 4 * 2084

    def test_truncated_file_rejected(self, tmp_path, rng):
        p = PolicyGRU(8, rng=rng)
        path = tmp_path / "p.bin"
        export_policy(p, path)
        raw = path.read_bytes()
        bad = tmp_path / "bad.bin"
        bad.write_bytes(raw[:-17])
        with pytest.raises(ValueError, match="truncated"):
            load_policy(bad)

    def test_bad_magic_and_version(self, tmp_path, rng):
        p = PolicyGRU(8, rng=rng)
        path = tmp_path / "p.bin"
        export_policy(p, path)
        raw = bytearray(path.read_bytes())
        bad = tmp_path / "m.bin"
        bad.write_bytes(b"XXXX" + bytes(raw[4:]))
        with pytest.raises(ValueError, match="magic"):
            load_policy(bad)
        raw[4] = 99
        bad.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            load_policy(bad)


class TestConstantTimeInference:
    def test_step_time_does_not_grow_with_history(self, rng):
        p = PolicyGRU(16, rng=rng)
        h = p.reset_hidden()
        obs = rng.normal(size=22)
        n = 10_000
        stamps = np.empty(n)
        for i in range(n):
            t0 = time.perf_counter()
            _, h = p.forward(obs, h)
            stamps[i] = time.perf_counter() - t0
        first = np.median(stamps[:1000])
        last = np.median(stamps[-1000:])
        assert last < 3.0 * first
