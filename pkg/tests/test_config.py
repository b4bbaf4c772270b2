import numpy as np
import pytest

from epal.config import RunConfig, load_config, parse_config_text, validate


GOOD = """\
# desk-scale run
dataset = synthetic
synthetic_classes = 10
synthetic_per_class = 23
synthetic_test_count = 30
synthetic_noise = 0.6
n_splits = 4
strategies = 1,3
trials = 2
theta = 0.8
mc_passes = 4
master_seed = 7
architecture = small
precision = float32
learning_rate = 0.003
batch_size = 16
max_epochs = 2
early_stop_patience = 2
validation_fraction = 0.1
workers = 1
output_dir = out/test
"""


class TestParse:
    def test_good_file_parses(self):
        values, diags = parse_config_text(GOOD)
        assert diags == []
        cfg = RunConfig(**values)
        assert cfg.strategies == (1, 3)
        assert cfg.theta == 0.8
        assert cfg.dtype() == np.float32

    def test_comments_and_blanks_ignored(self):
        values, diags = parse_config_text("# hi\n\ntrials = 3  # trailing\n")
        assert diags == []
        assert values == {"trials": 3}

    def test_unknown_key_diagnosed(self):
        _, diags = parse_config_text("bogus_key = 3\n")
        assert any("bogus_key" in d for d in diags)

    def test_type_error_diagnosed(self):
        _, diags = parse_config_text("trials = banana\n")
        assert any("trials" in d for d in diags)

    def test_missing_equals_diagnosed(self):
        _, diags = parse_config_text("just some words\n")
        assert any("line 1" in d for d in diags)

    def test_theta_sweep_list(self):
        values, diags = parse_config_text("theta_sweep = 0.2, 0.8, 1.4\n")
        assert diags == []
        assert values["theta_sweep"] == (0.2, 0.8, 1.4)


class TestValidate:
    def test_defaults_are_valid(self):
        assert validate(RunConfig()) == []

    def test_zero_trials_diagnosed(self):
        diags = validate(RunConfig(trials=0))
        assert any(d.startswith("trials") for d in diags)

    def test_strategy_nine_diagnosed(self):
        diags = validate(RunConfig(strategies=(1, 9)))
        assert any(d.startswith("strategies") for d in diags)

    def test_negative_theta_diagnosed(self):
        diags = validate(RunConfig(theta=-0.1))
        assert any(d.startswith("theta") for d in diags)

    def test_cifar_requires_dir(self):
        diags = validate(RunConfig(dataset="cifar10", cifar10_dir=""))
        assert any(d.startswith("cifar10_dir") for d in diags)

    def test_indivisible_pool_diagnosed(self):
        diags = validate(RunConfig(synthetic_per_class=23, synthetic_test_count=31))
        assert any(d.startswith("n_splits") for d in diags)

    def test_multiple_diagnostics_reported(self):
        diags = validate(RunConfig(trials=0, theta=-1, mc_passes=0))
        assert len(diags) >= 3


class TestLoadConfig:
    def test_load_good(self, tmp_path):
        p = tmp_path / "good.cfg"
        p.write_text(GOOD)
        cfg, diags = load_config(p)
        assert diags == []
        assert cfg.synthetic_per_class == 23

    def test_load_invalid_returns_diags(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("trials = 0\n")
        cfg, diags = load_config(p)
        assert cfg is None
        assert any("trials" in d for d in diags)

    def test_load_missing_file(self, tmp_path):
        cfg, diags = load_config(tmp_path / "nope.cfg")
        assert cfg is None
        assert any("cannot read" in d for d in diags)
