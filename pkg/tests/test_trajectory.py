import math

import numpy as np
import pytest

from quadfoundry.trajectory import (FigureEightConfig, FigureEightTrajectory,
                                    LangevinConfig, LangevinTrajectory,
                                    NullTrajectory, ReferenceState,
                                    langevin_step, lissajous_figure_eight,
                                    sample_task)


class TestLangevin:
    def test_origin_is_fixed_point_without_noise(self, rng):
        cfg = LangevinConfig(noise_scale=0.0)
        ref = ReferenceState()
        for _ in range(100):
            ref = langevin_step(ref, cfg, 0.01, rng)
        np.testing.assert_array_equal(ref.position, 0.0)
        np.testing.assert_array_equal(ref.velocity, 0.0)

    def test_noise_free_damped_oscillation_matches_closed_form(self, rng):
        # oracle: x'' = -g x' - k x, underdamped closed form
        k, g = 1.0, 1.0
        cfg = LangevinConfig(stiffness=k, damping=g, noise_scale=0.0,
                             position_clamp=10.0)
        dt = 0.001
        ref = ReferenceState(position=np.array([1.0, 0.0, 0.0]))
        wd = math.sqrt(k - g * g / 4)
        xs, oracle = [], []
        for i in range(1, 8001):
            ref = langevin_step(ref, cfg, dt, rng)
            t = i * dt
            xs.append(ref.position[0])
            oracle.append(math.exp(-g * t / 2)
                          * (math.cos(wd * t) + g / (2 * wd) * math.sin(wd * t)))
        np.testing.assert_allclose(xs, oracle, atol=5e-3)

    def test_envelope_decays(self, rng):
        cfg = LangevinConfig(noise_scale=0.0, position_clamp=10.0)
        ref = ReferenceState(position=np.array([1.0, 0.0, 0.0]))
        peaks = []
        prev_v_sign = 0.0
        for i in range(3000):
            ref = langevin_step(ref, cfg, 0.01, rng)
            s = np.sign(ref.velocity[0])
            if prev_v_sign < 0 <= s or prev_v_sign > 0 >= s:
                peaks.append(abs(ref.position[0]))
            prev_v_sign = s
        assert len(peaks) > 3
        assert all(b < a for a, b in zip(peaks, peaks[1:]))

    def test_stationary_velocity_std_matches_ou_value(self):
        # sigma / sqrt(2 gamma) per axis, 1e6 steps
        cfg = LangevinConfig()
        rng = np.random.default_rng(99)
        dt = 0.01
        ref = ReferenceState()
        n = 1_000_000
        acc = np.zeros(3)
        acc2 = np.zeros(3)
        for _ in range(n):
            ref = langevin_step(ref, cfg, dt, rng)
            acc += ref.velocity
            acc2 += ref.velocity ** 2
        std = np.sqrt(acc2 / n - (acc / n) ** 2)
        expected = cfg.noise_scale / math.sqrt(2 * cfg.damping)
        np.testing.assert_allclose(std, expected, rtol=0.10)

    def test_position_clamp_zeroes_velocity(self, rng):
        cfg = LangevinConfig(position_clamp=0.5)
        ref = ReferenceState(position=np.array([0.49, 0.0, 0.0]),
                             velocity=np.array([5.0, 0.0, 0.0]))
        out = langevin_step(ref, cfg, 0.01, rng)
        assert out.position[0] == 0.5
        assert out.velocity[0] == 0.0

    def test_continuity_bound(self, rng):
        cfg = LangevinConfig()
        ref = ReferenceState()
        dt = 0.01
        for _ in range(5000):
            nxt = langevin_step(ref, cfg, dt, rng)
            step = np.abs(nxt.position - ref.position)
            bound = (np.abs(ref.velocity) + cfg.noise_scale * math.sqrt(dt)) * dt + 1e-12
            assert np.all(step <= bound)
            ref = nxt


class TestTaskMixture:
    def test_null_fraction_half(self):
        rng = np.random.default_rng(5)
        n = 10_000
        nulls = sum(isinstance(sample_task(rng), NullTrajectory) for _ in range(n))
        assert abs(nulls / n - 0.5) < 0.02

    def test_null_trajectory_is_all_zeros(self):
        task = NullTrajectory()
        ref = task.reset()
        for _ in range(50):
            ref = task.step(ref, 0.01)
            np.testing.assert_array_equal(ref.position, 0.0)
            np.testing.assert_array_equal(ref.velocity, 0.0)

    def test_degenerate_langevin_equals_null(self, rng):
        cfg = LangevinConfig(noise_scale=0.0)
        task = LangevinTrajectory(cfg, rng, start=np.zeros(3))
        ref = task.reset()
        for _ in range(50):
            ref = task.step(ref, 0.01)
            np.testing.assert_array_equal(ref.position, 0.0)


class TestFigureEight:
    def test_starts_at_origin_at_hover(self):
        ref = lissajous_figure_eight(10.0, (1.0, 0.5), 1.0, 0.0)
        np.testing.assert_array_equal(ref.position, 0.0)
        np.testing.assert_array_equal(ref.velocity, 0.0)

    def test_full_loop_returns_to_start(self):
        period, ramp = 10.0, 1.0
        ref = lissajous_figure_eight(period, (1.0, 0.5), ramp, period + ramp)
        np.testing.assert_allclose(ref.position, 0.0, atol=1e-9)

    def test_periodic_after_ramp(self):
        period, ramp = 7.0, 1.0
        for t in np.linspace(ramp, ramp + period, 37):
            a = lissajous_figure_eight(period, (1.0, 0.5), ramp, t)
            b = lissajous_figure_eight(period, (1.0, 0.5), ramp, t + 3 * period)
            np.testing.assert_allclose(a.position, b.position, atol=1e-9)
            np.testing.assert_allclose(a.velocity, b.velocity, atol=1e-9)

    def test_velocity_matches_finite_differences(self, rng):
        # central-difference oracle at 1000 random times (ramp kink excluded)
        period, ramp = 10.0, 1.0
        h = 1e-6
        times = rng.uniform(0.0, 3 * period, 1000)
        times = times[np.abs(times - ramp) > 1e-3]
        for t in times:
            f = lambda tt: lissajous_figure_eight(period, (1.0, 0.5), ramp, tt).position
            fd = (f(t + h) - f(t - h)) / (2 * h)
            v = lissajous_figure_eight(period, (1.0, 0.5), ramp, t).velocity
            np.testing.assert_allclose(v, fd, atol=2e-6)

    def test_trajectory_object_steps_time(self):
        traj = FigureEightTrajectory(FigureEightConfig(period=10.0))
        ref = traj.reset()
        for _ in range(150):
            ref = traj.step(ref, 0.01)
        expected = lissajous_figure_eight(10.0, (1.0, 0.5), 1.0, 1.5)
        np.testing.assert_allclose(ref.position, expected.position, atol=1e-12)
