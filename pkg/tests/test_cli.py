import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from quadfoundry.cli import run_cli
from quadfoundry.config import (ExperimentConfig, config_from_dict,
                                config_to_dict, load_config, save_config)
from quadfoundry.policy import PolicyGRU, export_policy, load_policy
from quadfoundry.sampling import load_fleet


class TestConfig:
    def test_round_trip_lossless(self, tmp_path):
        cfg = ExperimentConfig(seed=42)
        cfg.sac.batch_size = 77
        cfg.distill.epochs = 123
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        back = load_config(path)
        assert config_to_dict(back) == config_to_dict(cfg)
        assert back.sac.batch_size == 77
        assert back.sampler.t2w_range == (1.5, 5.0)

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            config_from_dict({"seed": 1, "nonsense": {}})

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ValueError, match="unknown SACConfig keys"):
            config_from_dict({"sac": {"gamma": 0.9, "turbo": True}})


class TestSampleCommand:
    def test_deterministic_output_files(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(["sample", "--n", "4", "--seed", "1", "--out", str(a)]) == 0
        assert run_cli(["sample", "--n", "4", "--seed", "1", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        fleet = load_fleet(a)
        assert len(fleet) == 4

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run_cli(["sample", "--n", "2", "--seed", "1", "--out", str(a)])
        run_cli(["sample", "--n", "2", "--seed", "2", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_missing_required_flag_exits_nonzero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "quadfoundry.cli", "sample", "--n", "2"],
            capture_output=True, text=True)
        assert proc.returncode != 0
        assert "usage" in (proc.stderr + proc.stdout).lower()

    def test_unknown_flag_exits_nonzero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "quadfoundry.cli", "sample", "--n", "2",
             "--out", "/tmp/x.json", "--warp-drive", "9"],
            capture_output=True, text=True)
        assert proc.returncode != 0

    def test_flag_overrides_config(self, tmp_path):
        cfgp = tmp_path / "cfg.json"
        save_config(ExperimentConfig(seed=5), cfgp)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run_cli(["sample", "--n", "2", "--config", str(cfgp), "--out", str(a)])
        run_cli(["sample", "--n", "2", "--seed", "5", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.json"
        run_cli(["sample", "--n", "2", "--config", str(cfgp), "--seed", "9",
                 "--out", str(c)])
        assert c.read_bytes() != a.read_bytes()


class TestTrajCommand:
    def test_fig8_csv(self, tmp_path):
        out = tmp_path / "traj.csv"
        assert run_cli(["traj", "--kind", "fig8", "--period", "10",
                        "--seconds", "11", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "t,px,py,pz,vx,vy,vz"
        assert len(lines) == 1102  # header + 1101 samples (t=0..11 s at 100 Hz)
        first = [float(x) for x in lines[1].split(",")]
        assert first[1:4] == [0.0, 0.0, 0.0]

    def test_langevin_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(["traj", "--kind", "langevin", "--seconds", "2", "--seed", "3",
                 "--out", str(a)])
        run_cli(["traj", "--kind", "langevin", "--seconds", "2", "--seed", "3",
                 "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestExportInfer:
    def test_export_then_infer_round_trip(self, tmp_path, rng):
        student = PolicyGRU(8, rng=rng)
        ckpt = tmp_path / "student.ckpt.npz"
        np.savez(ckpt, hidden=student.hidden, obs_dim=student.obs_dim,
                 act_dim=student.act_dim,
                 **{n: getattr(student, n) for n in student.PARAM_NAMES})
        policy_path = tmp_path / "policy.bin"
        assert run_cli(["export", "--checkpoint", str(ckpt),
                        "--out", str(policy_path)]) == 0
        obs = rng.normal(size=(20, 22))
        obs_csv = tmp_path / "obs.csv"
        np.savetxt(obs_csv, obs, delimiter=",")
        out_csv = tmp_path / "act.csv"
        assert run_cli(["infer", "--policy", str(policy_path),
                        "--obs-csv", str(obs_csv), "--out", str(out_csv)]) == 0
        acts = np.loadtxt(out_csv, delimiter=",", skiprows=1)
        assert acts.shape == (20, 4)
        # reference: run the loaded policy directly
        ref_policy = load_policy(policy_path)
        h = ref_policy.reset_hidden()
        for t in range(20):
            a, h = ref_policy.forward(obs[t], h)
            np.testing.assert_allclose(acts[t], a, atol=1e-8)


class TestStudyCommands:
    @pytest.fixture(scope="class")
    def setup(self, tmp_path_factory):
        td = tmp_path_factory.mktemp("cli")
        fleet = td / "fleet.json"
        run_cli(["sample", "--n", "3", "--seed", "7", "--out", str(fleet)])
        policy = td / "policy.bin"
        export_policy(PolicyGRU(8, rng=np.random.default_rng(0)), policy)
        return td, fleet, policy

    def test_eval_fig8_outputs(self, setup):
        td, fleet, policy = setup
        out = td / "fig8"
        rc = run_cli(["eval-fig8", "--student", str(policy), "--fleet", str(fleet),
                      "--index", "0", "--period", "10", "--loops", "1",
                      "--out", str(out)])
        assert rc == 0
        assert (out / "fig8_metrics.json").exists()
        assert (out / "fig8.png").exists()
        assert (out / "fig8_episode.csv").exists()

    def test_delay_study_outputs(self, setup):
        td, fleet, policy = setup
        out = td / "delay"
        rc = run_cli(["delay-study", "--student", str(policy), "--fleet", str(fleet),
                      "--delays", "0,0.02", "--mitigation", "both",
                      "--out", str(out)])
        assert rc == 0
        rows = (out / "delay_study.csv").read_text().strip().splitlines()
        assert len(rows) == 5  # header + 2 delays x 2 mitigation modes
        assert (out / "delay_study.png").exists()

    def test_activate_outputs(self, setup):
        td, fleet, policy = setup
        out = td / "act"
        run_cli(["activate", "--student", str(policy), "--fleet", str(fleet),
                 "--speed", "0.5", "--out", str(out)])
        assert (out / "activation_episode.csv").exists()
        assert (out / "activation.png").exists()

    def test_disturb_outputs(self, setup):
        td, fleet, policy = setup
        out = td / "dist"
        run_cli(["disturb", "--student", str(policy), "--fleet", str(fleet),
                 "--kind", "prop_swap", "--motor", "1", "--scale", "0.9",
                 "--out", str(out)])
        assert (out / "disturb_prop_swap.csv").exists()
        assert (out / "disturb_prop_swap.png").exists()


class TestConfigEnvVar:
    def test_env_var_supplies_default_config(self, tmp_path, monkeypatch):
        cfgp = tmp_path / "cfg.json"
        save_config(ExperimentConfig(seed=31), cfgp)
        monkeypatch.setenv("QUADFOUNDRY_CONFIG", str(cfgp))
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        run_cli(["sample", "--n", "2", "--out", str(a)])
        monkeypatch.delenv("QUADFOUNDRY_CONFIG")
        run_cli(["sample", "--n", "2", "--seed", "31", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
