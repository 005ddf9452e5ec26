import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from psar.cli import run
from psar.envgen import load_action_dataset


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("PSAR_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


SMALL_BANDIT = ["--num-actions", "3", "--horizon", "20", "--reps", "3", "--jobs", "1"]


class TestValidation:
    def test_missing_seed(self, root, capsys):
        assert run(["run-bandit"]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and "seed" in err[0]

    def test_unknown_config_key(self, root, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("seed = 1\nbogus = 2\n")
        assert run(["verify", "--config", str(cfg)]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_train_needs_dataset(self, root, capsys):
        assert run(["train", "--seed", "0"]) == 2
        assert "dataset" in capsys.readouterr().err

    def test_unknown_policy(self, root):
        assert run(["run-bandit", "--seed", "0", "--policies", "nope"] + SMALL_BANDIT) == 2


class TestModes:
    def test_verify(self, root, capsys):
        assert run(["verify", "--seed", "0", "--lower-bound-reps", "300", "--sim-reps", "200"]) == 0
        lines = (root / "verify" / "verify.csv").read_text().splitlines()
        assert lines[0] == "check_name,lhs,rhs,margin,pass"
        assert all(line.endswith(",pass") for line in lines[1:])
        assert "kl_identity" in capsys.readouterr().out

    def test_bandit_deterministic(self, root):
        args = ["run-bandit", "--seed", "5", "--policies", "ts_oracle,ts_uniform_bb,ucb"] + SMALL_BANDIT
        assert run(args + ["--output", "a"]) == 0
        assert run(args + ["--output", "b"]) == 0
        a = (root / "a" / "regret.csv").read_bytes()
        assert a == (root / "b" / "regret.csv").read_bytes()
        assert a.startswith(b"policy,rep,t,instant_regret,cum_regret\n")

    def test_jobs_not_in_results(self, root):
        args = ["run-bandit", "--seed", "5", "--policies", "ts_uniform_bb"] + SMALL_BANDIT[:-2]
        assert run(args + ["--jobs", "1", "--output", "a"]) == 0
        assert run(args + ["--jobs", "2", "--output", "b"]) == 0
        assert (root / "a" / "regret.csv").read_bytes() == (root / "b" / "regret.csv").read_bytes()
        ma, mb = (json.loads((root / d / "manifest.json").read_text()) for d in "ab")
        assert ma["outputs"] == mb["outputs"] and "jobs" not in ma["config"]

    def test_manifest_and_round_trip(self, root):
        args = ["run-bandit", "--seed", "2", "--policies", "ts_uniform_bb", "--output", "first"] + SMALL_BANDIT
        assert run(args) == 0
        manifest = json.loads((root / "first" / "manifest.json").read_text())
        assert manifest["seed"] == 2 and manifest["config"]["horizon"] == 20
        digest = hashlib.sha256((root / "first" / "regret.csv").read_bytes()).hexdigest()
        assert manifest["outputs"]["regret.csv"] == digest
        # re-running the resolved config reproduces the outputs
        resolved = root / "first" / "config.resolved"
        assert run(["run-bandit", "--config", str(resolved), "--output", "second"]) == 0
        assert (root / "second" / "regret.csv").read_bytes() == (root / "first" / "regret.csv").read_bytes()
        text = resolved.read_text().replace("output = first", "output = second")
        assert (root / "second" / "config.resolved").read_text() == text

    def test_flag_overrides_file(self, root, tmp_path):
        cfg = tmp_path / "x.cfg"
        cfg.write_text("seed = 1\nhorizon = 50\nreps = 2\nnum_actions = 2\npolicies = ts_uniform_bb\n")
        assert run(["run-bandit", "--config", str(cfg), "--horizon", "10", "--jobs", "1"]) == 0
        rows = (root / "run-bandit" / "regret.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 10

    def test_gen_train_coverage(self, root):
        assert run(["gen-data", "--seed", "0", "--num-actions", "60", "--horizon", "100"]) == 0
        data = root / "gen-data" / "dataset.csv"
        ds = load_action_dataset(data)
        assert len(ds) == 60 and ds.feature_dim == 2
        assert run(["train", "--seed", "0", "--dataset", str(data), "--model", "bb_nn", "--hidden", "8",
                    "--epochs", "3", "--batch-size", "20"]) == 0
        ckpt = root / "train" / "model.npz"
        assert ckpt.is_file() and (root / "train" / "train_report.csv").is_file()
        assert run(["coverage", "--seed", "0", "--models", f"oracle,{ckpt}", "--num-held-out", "30",
                    "--horizon", "50", "--k", "20", "--t-obs", "0,5"]) == 0
        rows = (root / "coverage" / "coverage.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 2
        assert run(["run-bandit", "--seed", "0", "--policies", "ts_psar,bayes_ucb_psar", "--model", str(ckpt),
                    "--num-generations", "5"] + SMALL_BANDIT) == 0

    def test_category_data(self, root):
        assert run(["gen-data", "--seed", "0", "--env", "category", "--num-actions", "40", "--horizon", "30",
                    "--num-categories", "4"]) == 0
        ds = load_action_dataset(root / "gen-data" / "dataset.csv")
        assert np.all(ds.features.sum(axis=1) == 1)

    def test_console_script(self, root):
        out = subprocess.run([sys.executable, "-m", "psar.cli", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and out.stdout.strip()
