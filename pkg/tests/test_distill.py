import tracemalloc

import numpy as np
import pytest

from quadfoundry.distill import (DistillBatch, DistillConfig, bptt_update,
                                 distill, evaluate_student, mse_loss,
                                 mse_loss_and_grad, rollout_epoch)
from quadfoundry.env import OBS_DIM
from quadfoundry.nets import MLP, Adam
from quadfoundry.policy import PolicyGRU
from quadfoundry.sac import TeacherCheckpoint
from quadfoundry.sampling import sample_fleet


def random_teacher(params, seed=0) -> TeacherCheckpoint:
    """Untrained stand-in teacher: a deterministic random MLP labeler."""
    actor = MLP([26, 16, 16, 8], np.random.default_rng(seed), dtype=np.float32)
    return TeacherCheckpoint(
        sizes=actor.sizes,
        weights=[w.astype(np.float32) for w in actor.parameters()],
        params=params, training_steps=0, final_eval_episode_length=0.0, seed=seed)


@pytest.fixture(scope="module")
def small_setup():
    fleet = sample_fleet(3, master_seed=77)
    pairs = [(p, random_teacher(p, seed=i)) for i, (p, t) in enumerate(fleet)]
    return fleet, pairs


class TestMSELoss:
    def test_identical_actions_zero(self):
        a = np.random.rand(5, 3, 4)
        assert mse_loss(a, a.copy(), np.ones((5, 3))) == 0.0

    def test_constant_offset_value(self):
        t = np.zeros((7, 2, 4))
        s = t + 0.25
        expected = 0.5 * 4 * 0.25 ** 2
        assert mse_loss(s, t, np.ones((7, 2))) == pytest.approx(expected, rel=1e-12)

    def test_zero_mask_is_zero_loss_and_grad(self):
        s = np.random.rand(4, 2, 4)
        t = np.random.rand(4, 2, 4)
        loss, grad = mse_loss_and_grad(s, t, np.zeros((4, 2)))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_mask_selects_steps(self):
        s = np.ones((2, 1, 4))
        t = np.zeros((2, 1, 4))
        mask = np.array([[1.0], [0.0]])
        # only the first step counts: 0.5 * 4 / 1
        assert mse_loss(s, t, mask) == pytest.approx(2.0)


class TestRolloutEpoch:
    def test_warmup_executes_labels(self, small_setup):
        fleet, pairs = small_setup
        student = PolicyGRU(8, rng=np.random.default_rng(0))
        cfg = DistillConfig(epochs=5, warmup_epochs=1, horizon=30,
                            envs_per_epoch=6)
        actors = [c.make_actor() for _, c in pairs]
        params_list = [p for p, _ in pairs]
        rng = np.random.default_rng(5)
        assignment = rng.integers(0, 3, 6)
        batch = rollout_epoch(student, actors, assignment, params_list, cfg,
                              "warmup", rng)
        live = batch.mask > 0
        np.testing.assert_allclose(batch.executed[live], batch.labels[live],
                                   atol=1e-7)

    def test_onpolicy_executes_student(self, small_setup):
        fleet, pairs = small_setup
        student = PolicyGRU(8, rng=np.random.default_rng(0))
        cfg = DistillConfig(epochs=5, warmup_epochs=1, horizon=30,
                            envs_per_epoch=6)
        actors = [c.make_actor() for _, c in pairs]
        params_list = [p for p, _ in pairs]
        rng = np.random.default_rng(5)
        assignment = rng.integers(0, 3, 6)
        batch = rollout_epoch(student, actors, assignment, params_list, cfg,
                              "onpolicy", rng)
        live = batch.mask > 0
        # labels come from the teacher and generally differ from the executed
        assert np.max(np.abs(batch.executed[live] - batch.labels[live])) > 1e-3
        # executed actions replay exactly under the student's own forward pass
        acts, _ = student.forward_sequence(batch.observations)
        np.testing.assert_allclose(acts[live], batch.executed[live], atol=1e-7)

    def test_mask_zero_after_termination(self, small_setup):
        fleet, pairs = small_setup
        student = PolicyGRU(8)  # zero policy: all motors at 0.5, crashes soon
        cfg = DistillConfig(epochs=5, warmup_epochs=1, horizon=60,
                            envs_per_epoch=4)
        actors = [c.make_actor() for _, c in pairs]
        params_list = [p for p, _ in pairs]
        rng = np.random.default_rng(2)
        batch = rollout_epoch(student, actors, rng.integers(0, 3, 4),
                              params_list, cfg, "onpolicy", rng)
        for b in range(batch.mask.shape[1]):
            col = batch.mask[:, b]
            if col.min() == 0 and col.max() > 0:
                last_live = int(np.max(np.nonzero(col)))
                assert np.all(col[last_live + 1:] == 0)

    def test_labels_are_pure_functions_of_state(self, small_setup):
        fleet, pairs = small_setup
        actor = pairs[0][1].make_actor()
        obs = np.random.default_rng(1).normal(size=(4, 26)).astype(np.float32)
        from quadfoundry.sac import batch_deterministic_actions
        a1 = batch_deterministic_actions(actor, obs)
        a2 = batch_deterministic_actions(actor, obs)
        np.testing.assert_array_equal(a1, a2)


class TestBPTTUpdate:
    def test_empty_mask_is_noop(self):
        student = PolicyGRU(4, rng=np.random.default_rng(0))
        before = [p.copy() for p in student.parameters()]
        batch = DistillBatch(np.zeros((3, 2, OBS_DIM), dtype=np.float32),
                             np.zeros((3, 2, 4), dtype=np.float32),
                             np.zeros((3, 2, 4), dtype=np.float32),
                             np.zeros((3, 2), dtype=np.float32))
        opt = Adam(student.parameters(), 1e-3)
        loss = bptt_update(student, batch, opt, DistillConfig(epochs=2, warmup_epochs=1))
        assert loss == 0.0
        for a, b in zip(student.parameters(), before):
            np.testing.assert_array_equal(a, b)

    def test_loss_decreases_on_fixed_batch(self, rng):
        student = PolicyGRU(8, rng=np.random.default_rng(3), dtype=np.float64)
        obs = rng.normal(size=(20, 8, OBS_DIM))
        labels = rng.uniform(0.3, 0.7, (20, 8, 4))
        mask = np.ones((20, 8), dtype=np.float64)
        batch = DistillBatch(obs, labels, labels.copy(), mask)
        opt = Adam(student.parameters(), 1e-2)
        cfg = DistillConfig(epochs=2, warmup_epochs=1)
        losses = [bptt_update(student, batch, opt, cfg) for _ in range(60)]
        assert losses[-1] < 0.5 * losses[0]


class TestDistillLoop:
    def _cfg(self):
        return DistillConfig(epochs=24, warmup_epochs=4, horizon=40,
                             envs_per_epoch=8, eval_episodes=2, eval_every=6,
                             hidden=8)

    def test_loss_decreasing_trend(self, small_setup):
        fleet, pairs = small_setup
        student, curve = distill(pairs[:2], [fleet[2][0]], self._cfg(), seed=4)
        losses = [r["loss"] for r in curve if r["mode"] == "onpolicy"]
        assert np.median(losses[-5:]) < np.median(losses[:5])

    def test_same_seed_identical_weights(self, small_setup):
        fleet, pairs = small_setup
        s1, _ = distill(pairs[:2], [], self._cfg(), seed=9)
        s2, _ = distill(pairs[:2], [], self._cfg(), seed=9)
        for a, b in zip(s1.parameters(), s2.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_memory_flat_across_epochs(self, small_setup):
        fleet, pairs = small_setup
        cfg = DistillConfig(epochs=14, warmup_epochs=2, horizon=40,
                            envs_per_epoch=8, eval_episodes=0, hidden=8)
        tracemalloc.start()
        distill(pairs[:2], [], cfg, seed=1)
        _, first_peak = tracemalloc.get_traced_memory()
        tracemalloc.reset_peak()
        cfg2 = DistillConfig(epochs=44, warmup_epochs=2, horizon=40,
                             envs_per_epoch=8, eval_episodes=0, hidden=8)
        distill(pairs[:2], [], cfg2, seed=1)
        _, second_peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        # 3x the epochs must not grow the working set (no batch aggregation)
        assert second_peak < 1.5 * first_peak + 1_000_000

    def test_curve_csv_written(self, small_setup, tmp_path):
        fleet, pairs = small_setup
        path = tmp_path / "curve.csv"
        distill(pairs[:2], [fleet[2][0]], self._cfg(), seed=4, curve_path=path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("epoch,mode,loss")
        assert len(lines) == 25


class TestHiddenContinuity:
    def test_recorded_rollout_replays_hidden_states(self, small_setup):
        fleet, pairs = small_setup
        student = PolicyGRU(8, rng=np.random.default_rng(1))
        params = fleet[0][0]
        rng = np.random.default_rng(0)
        from quadfoundry.env import BatchEnv
        env = BatchEnv([params] * 3, horizon=25, task_mode="mixture")
        obs = env.reset(rng)
        h = student.reset_hidden(3)
        obs_seq, h_seq = [], []
        for _ in range(25):
            act, h = student.step(obs, h)
            obs_seq.append(obs.copy())
            h_seq.append(h.copy())
            obs, _, _, _ = env.step(act.astype(np.float64), rng)
        _, h_replay = student.forward_sequence(np.asarray(obs_seq, dtype=np.float32))
        np.testing.assert_allclose(np.asarray(h_seq), h_replay, atol=1e-7)


class TestEvaluateStudent:
    def test_lengths_and_shapes(self, small_setup):
        fleet, pairs = small_setup
        student = PolicyGRU(8, rng=np.random.default_rng(1))
        lengths, rmse = evaluate_student(student, [fleet[0][0], fleet[1][0]],
                                         episodes=3, seed=11, horizon=30)
        assert lengths.shape == (6,) and rmse.shape == (6,)
        assert np.all(lengths >= 1) and np.all(lengths <= 30)

    def test_deterministic(self, small_setup):
        fleet, pairs = small_setup
        student = PolicyGRU(8, rng=np.random.default_rng(1))
        a = evaluate_student(student, [fleet[0][0]], 4, seed=3, horizon=30)
        b = evaluate_student(student, [fleet[0][0]], 4, seed=3, horizon=30)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
