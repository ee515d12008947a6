import math

import numpy as np
import pytest
from scipy import stats

from quadfoundry.dynamics import GRAVITY, hover_command, thrust_curve
from quadfoundry.sampling import (SamplerConfig, derive_params, load_fleet,
                                  replay_trace, sample_fleet, sample_quadrotor,
                                  save_fleet)


def midpoint_oracle():
    """Scripted arithmetic replay of the sampling chain at midpoint draws."""
    r_t2w = (1.5 + 5.0) / 2
    s = (0.02 ** (1 / 3) + 5.0 ** (1 / 3)) / 2
    m = s ** 3
    T = r_t2w * 9.81 * m
    u = 0.0
    s_ms = 1.0
    l_arm = m ** (1 / 3) / (s_ms * 7.90)
    r_t2i = (40 + 1200) / 2
    tau = T * math.sqrt(2) * l_arm
    j_xx = tau / r_t2i
    j_zz = j_xx * 1.832
    return dict(r_t2w=r_t2w, m=m, T=T, l_arm=l_arm, j_xx=j_xx, j_zz=j_zz)


class TestAncestralChain:
    def test_midpoint_arithmetic(self):
        o = midpoint_oracle()
        params, trace = derive_params(
            SamplerConfig(), r_t2w=o["r_t2w"], s=o["m"] ** (1 / 3), u=0.0,
            r_t2i=(40 + 1200) / 2, c_m=0.0275, tau_up=0.065, tau_down=0.165)
        assert params.mass == pytest.approx(0.9724, abs=5e-4)
        assert trace.T == pytest.approx(31.00, abs=5e-2)
        assert params.arm_length == pytest.approx(0.1254, abs=5e-4)
        assert params.J_xx == pytest.approx(8.87e-3, rel=5e-3)
        assert params.J_zz == pytest.approx(1.62e-2, rel=5e-3)
        # exact relations, not just rounded values
        assert params.mass == pytest.approx(o["m"], rel=1e-12)
        assert params.J_zz == pytest.approx(o["j_zz"], rel=1e-12)

    def test_zero_deviation_identity(self):
        params, trace = derive_params(SamplerConfig(), r_t2w=3.0, s=1.0, u=0.0,
                                      r_t2i=100.0, c_m=0.01, tau_up=0.05,
                                      tau_down=0.1)
        assert trace.s_ms == 1.0
        assert params.arm_length == pytest.approx(1.0 / 7.90, rel=1e-15)

    def test_marginals_in_range(self):
        cfg = SamplerConfig()
        for seed in range(300):
            p, t = sample_quadrotor(seed, cfg)
            assert 1.5 <= t.r_t2w <= 5.0
            assert 0.02 <= p.mass <= 5.0
            assert 0.005 <= p.c_m <= 0.05
            assert 0.03 <= p.motor_tau_up <= 0.1
            assert 0.03 <= p.motor_tau_down <= 0.3
            assert 40.0 <= t.r_t2i <= 1200.0

    def test_replay_reproduces_params_bit_exactly(self):
        for seed in range(50):
            p, t = sample_quadrotor(seed)
            p2 = replay_trace(t, p.c_m, p.motor_tau_up, p.motor_tau_down)
            assert p2 == p

    def test_every_sample_has_interior_hover_command(self):
        for seed in range(200):
            p, _ = sample_quadrotor(seed)
            u = hover_command(p)
            assert 0.0 < u < 1.0
            assert thrust_curve(p, u) == pytest.approx(p.mass * GRAVITY / 4, rel=1e-9)


class TestFleet:
    def test_deterministic_and_distinct(self):
        a = sample_fleet(16, master_seed=7)
        b = sample_fleet(16, master_seed=7)
        for (pa, ta), (pb, tb) in zip(a, b):
            assert pa == pb and ta == tb
        masses = {p.mass for p, _ in a}
        assert len(masses) == 16

    def test_neighbor_indices_differ(self):
        fleet = sample_fleet(2, master_seed=3)
        assert fleet[0][0] != fleet[1][0]

    def test_fleet_file_round_trip(self, tmp_path):
        fleet = sample_fleet(5, master_seed=11)
        path = tmp_path / "fleet.json"
        save_fleet(fleet, path)
        back = load_fleet(path)
        for (p, t), (p2, t2) in zip(fleet, back):
            assert p == p2 and t == t2


@pytest.fixture(scope="module")
def big_sample():
    n = 100_000
    cfg = SamplerConfig()
    rng = np.random.default_rng(2024)
    r_t2w = rng.uniform(*cfg.t2w_range, n)
    s = rng.uniform(cfg.mass_range[0] ** (1 / 3), cfg.mass_range[1] ** (1 / 3), n)
    u = rng.normal(cfg.ms_deviation_mean, cfg.ms_deviation_std, n)
    u = np.where(u <= -1, -0.999, u)
    s_ms = np.where(u < 0, 1 / (1 - u), 1 + u)
    return dict(r_t2w=r_t2w, s=s, u=u, r_ms=s_ms * cfg.mass_size_ratio)


class TestDistributionStatistics:
    """Vectorized mirror of the per-sample chain for the large-n statistics."""

    def test_mass_size_ratio_moments(self, big_sample):
        r_ms = big_sample["r_ms"]
        assert np.mean(r_ms) == pytest.approx(7.24, rel=0.05)
        assert np.std(r_ms) == pytest.approx(0.66, rel=0.05)

    def test_cbrt_mass_uniformity_ks(self, big_sample):
        lo, hi = 0.02 ** (1 / 3), 5.0 ** (1 / 3)
        stat = stats.kstest(big_sample["s"], stats.uniform(lo, hi - lo).cdf).statistic
        assert stat < 0.01

    def test_sampler_statistics_match_vectorized_mirror(self):
        # spot-check that per-sample draws follow the same marginals
        vals = np.array([sample_quadrotor(i)[1].r_ms for i in range(4000)])
        assert np.mean(vals) == pytest.approx(7.24, rel=0.05)
        assert np.std(vals) == pytest.approx(0.66, rel=0.10)
