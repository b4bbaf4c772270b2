import os
from pathlib import Path

import pytest

from epal.cli import main
from epal.report import parse_csv

TINY = """\
dataset = synthetic
synthetic_classes = 10
synthetic_per_class = 13
synthetic_test_count = 10
synthetic_noise = 0.6
n_splits = 4
strategies = {strategies}
trials = {trials}
theta = {theta}
{extra}
mc_passes = 2
master_seed = 5
architecture = small
dropout_rate = 0.2
precision = float32
learning_rate = 0.003
batch_size = 16
max_epochs = 1
early_stop_patience = 1
validation_fraction = 0.1
workers = {workers}
output_dir = {out}
"""


def write_cfg(tmp_path, name="run.cfg", strategies="3", trials=1, theta=0.8,
              workers=1, out=None, extra=""):
    out = out or str(tmp_path / "out")
    p = tmp_path / name
    p.write_text(TINY.format(strategies=strategies, trials=trials, theta=theta,
                             workers=workers, out=out, extra=extra))
    return p, Path(out)


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


class TestValidateVerb:
    def test_ok(self, tmp_path, capsys):
        cfg, _ = write_cfg(tmp_path)
        assert main(["validate", str(cfg)]) == 0
        assert "ok" in capsys.readouterr().out

    def test_invalid_exits_2_with_field_names(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("trials = 0\nstrategies = 9\n")
        assert main(["validate", str(p)]) == 2
        err = capsys.readouterr().err
        assert "trials" in err
        assert "strategies" in err

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["validate", str(tmp_path / "ghost.cfg")]) == 2


class TestRunVerb:
    def test_smoke_single_strategy(self, tmp_path):
        cfg, out = write_cfg(tmp_path)
        assert main(["run", str(cfg)]) == 0
        assert (out / "trials.csv").is_file()
        assert (out / "aggregate.csv").is_file()
        for kind in ("accuracy_vs_episode", "accuracy_vs_acquired", "acquisitions_vs_episode"):
            assert (out / "charts" / f"{kind}.svg").is_file()
        rows = parse_csv(out / "trials.csv")
        assert {r.strategy for r in rows} == {3}
        assert {r.episode for r in rows} == {1, 2, 3}

    def test_baseline_strategies_in_csv(self, tmp_path):
        cfg, out = write_cfg(tmp_path, strategies="3,6,7")
        assert main(["run", str(cfg)]) == 0
        rows = parse_csv(out / "trials.csv")
        six = [r for r in rows if r.strategy == 6]
        assert six[0].used_fraction == 1.0
        # with strategy 6 present its efficiency defines relative_xi = 1.0
        assert abs(six[0].relative_xi - 1.0) < 1e-12
        seven = [r for r in rows if r.strategy == 7]
        assert abs(seven[0].used_fraction - 0.74) < 0.01

    def test_runtime_failure_exits_1(self, tmp_path, capsys):
        p = tmp_path / "cifar.cfg"
        p.write_text("dataset = cifar10\ncifar10_dir = /nonexistent/dir\nstrategies = 3\ntrials = 1\n")
        assert main(["run", str(p)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_output_dir_env_override(self, tmp_path, monkeypatch):
        cfg, out = write_cfg(tmp_path)
        override = tmp_path / "elsewhere"
        monkeypatch.setenv("EPAL_OUTPUT_DIR", str(override))
        assert main(["run", str(cfg)]) == 0
        assert (override / "trials.csv").is_file()
        assert not (out / "trials.csv").exists()


class TestDeterminism:
    def test_identical_runs_byte_identical(self, tmp_path):
        cfg1, out1 = write_cfg(tmp_path, name="a.cfg", out=str(tmp_path / "o1"), trials=2)
        cfg2, out2 = write_cfg(tmp_path, name="b.cfg", out=str(tmp_path / "o2"), trials=2)
        assert main(["run", str(cfg1)]) == 0
        assert main(["run", str(cfg2)]) == 0
        t1, t2 = tree_bytes(out1), tree_bytes(out2)
        assert t1.keys() == t2.keys()
        assert t1 == t2

    def test_parallelism_does_not_change_outputs(self, tmp_path):
        cfg1, out1 = write_cfg(tmp_path, name="w1.cfg", out=str(tmp_path / "w1"), trials=2, workers=1)
        cfg2, out2 = write_cfg(tmp_path, name="w2.cfg", out=str(tmp_path / "w2"), trials=2, workers=2)
        assert main(["run", str(cfg1)]) == 0
        assert main(["run", str(cfg2)]) == 0
        assert tree_bytes(out1) == tree_bytes(out2)


class TestSweep:
    def test_sweep_dirs_and_chart(self, tmp_path):
        cfg, out = write_cfg(tmp_path, strategies="3")
        assert main(["sweep", str(cfg), "--theta", "0.1,2.5"]) == 0
        assert (out / "theta_0.1" / "trials.csv").is_file()
        assert (out / "theta_2.5" / "trials.csv").is_file()
        assert (out / "charts" / "theta_sweep.svg").is_file()

    def test_acquisitions_non_increasing_in_theta(self, tmp_path):
        cfg, out = write_cfg(tmp_path, strategies="3")
        assert main(["sweep", str(cfg), "--theta", "0.1,0.8,2.3025851"]) == 0
        totals = []
        for theta in ("0.1", "0.8", "2.3025851"):
            rows = parse_csv(out / f"theta_{theta}" / "trials.csv")
            totals.append(sum(r.acquired for r in rows))
        assert totals[0] >= totals[1] >= totals[2]
        assert totals[2] == 0  # theta >= ln 10 acquires nothing

    def test_config_driven_sweep_via_run(self, tmp_path):
        cfg, out = write_cfg(tmp_path, strategies="3", extra="theta_sweep = 0.5,1.0")
        assert main(["run", str(cfg)]) == 0
        assert (out / "theta_0.5" / "trials.csv").is_file()
        assert (out / "theta_1.0" / "trials.csv").is_file()

    def test_bad_theta_list_exits_2(self, tmp_path):
        cfg, _ = write_cfg(tmp_path)
        assert main(["sweep", str(cfg), "--theta", "a,b"]) == 2
