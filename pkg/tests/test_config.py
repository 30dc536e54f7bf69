"""Tests for TOML run configuration loading and validation."""

import pytest

from sfsearch.config import RunConfig, load_run_config
from sfsearch.datasets import SyntheticSpec
from sfsearch.errors import ConfigError


def write_toml(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


class TestDefaults:
    def test_no_file_no_overrides(self):
        cfg = load_run_config()
        assert cfg == RunConfig()

    def test_default_values(self):
        cfg = load_run_config()
        assert cfg.dataset is None
        assert cfg.out == "runs/out"
        assert cfg.seed == 0
        assert cfg.dim == 32
        assert cfg.blocks == 2
        assert cfg.groups == 2
        assert cfg.arch is None
        assert cfg.batch_size == 512
        assert cfg.epochs == 100
        assert cfg.learning_rate == 0.1
        assert cfg.search_learning_rate is None
        assert cfg.single_level is False
        assert cfg.freeze_groups is False
        assert cfg.constraint_scope == "per_group"
        assert cfg.tie_rule == "mean"
        assert cfg.eval_split == "test"
        assert cfg.synthetic is None


class TestFileLoading:
    def test_values_from_file(self, tmp_path):
        path = write_toml(
            tmp_path,
            'dataset = "data/toy"\n'
            "dim = 16\n"
            "blocks = 4\n"
            "learning_rate = 0.25\n"
            "freeze_groups = true\n"
            'tie_rule = "optimistic"\n',
        )
        cfg = load_run_config(path)
        assert cfg.dataset == "data/toy"
        assert cfg.dim == 16
        assert cfg.blocks == 4
        assert cfg.learning_rate == 0.25
        assert cfg.freeze_groups is True
        assert cfg.tie_rule == "optimistic"
        # untouched keys keep their defaults
        assert cfg.epochs == 100

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        path = write_toml(tmp_path, "dim = = 3\n")
        with pytest.raises(ConfigError, match="invalid TOML"):
            load_run_config(path)

    def test_unknown_key(self, tmp_path):
        path = write_toml(tmp_path, "dimension = 16\n")
        with pytest.raises(ConfigError, match="'dimension'"):
            load_run_config(path)

    def test_int_accepted_for_float_key(self, tmp_path):
        path = write_toml(tmp_path, "learning_rate = 1\n")
        cfg = load_run_config(path)
        assert cfg.learning_rate == 1.0
        assert isinstance(cfg.learning_rate, float)

    def test_bool_rejected_for_int_key(self, tmp_path):
        path = write_toml(tmp_path, "epochs = true\n")
        with pytest.raises(ConfigError, match="'epochs'"):
            load_run_config(path)

    def test_string_rejected_for_int_key(self, tmp_path):
        path = write_toml(tmp_path, 'dim = "32"\n')
        with pytest.raises(ConfigError, match="expected an integer"):
            load_run_config(path)

    def test_string_rejected_for_bool_key(self, tmp_path):
        path = write_toml(tmp_path, 'debug = "yes"\n')
        with pytest.raises(ConfigError, match="true or false"):
            load_run_config(path)

    def test_number_rejected_for_string_key(self, tmp_path):
        path = write_toml(tmp_path, "out = 3\n")
        with pytest.raises(ConfigError, match="expected a string"):
            load_run_config(path)


class TestOverrides:
    def test_override_without_file(self):
        cfg = load_run_config(overrides=["--dim=16", "--seed=9"])
        assert cfg.dim == 16
        assert cfg.seed == 9

    def test_override_beats_file(self, tmp_path):
        path = write_toml(tmp_path, "dim = 16\nseed = 3\n")
        cfg = load_run_config(path, overrides=["--dim=64"])
        assert cfg.dim == 64
        assert cfg.seed == 3

    def test_dash_to_underscore(self):
        cfg = load_run_config(overrides=["--learning-rate=0.5", "--eval-every=2"])
        assert cfg.learning_rate == 0.5
        assert cfg.eval_every == 2

    def test_bool_flag_spellings(self):
        for raw, expected in [
            ("true", True), ("1", True), ("yes", True),
            ("false", False), ("0", False), ("no", False),
            ("TRUE", True), ("False", False),
        ]:
            cfg = load_run_config(overrides=[f"--single-level={raw}"])
            assert cfg.single_level is expected, raw

    def test_bad_bool_flag(self):
        with pytest.raises(ConfigError, match="true or false"):
            load_run_config(overrides=["--debug=maybe"])

    def test_bad_int_flag(self):
        with pytest.raises(ConfigError, match="epochs=.*'ten'"):
            load_run_config(overrides=["--epochs=ten"])

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="--key=value"):
            load_run_config(overrides=["--dim"])

    def test_missing_dashes(self):
        with pytest.raises(ConfigError, match="--key=value"):
            load_run_config(overrides=["dim=16"])

    def test_unknown_flag_key(self):
        with pytest.raises(ConfigError, match="'dims'"):
            load_run_config(overrides=["--dims=16"])

    def test_synthetic_not_flaggable(self):
        with pytest.raises(ConfigError, match="synthetic"):
            load_run_config(overrides=["--synthetic=foo"])

    def test_float_flag_for_optional_float(self):
        cfg = load_run_config(overrides=["--search-learning-rate=0.01"])
        assert cfg.search_learning_rate == 0.01

    def test_string_flag_for_optional_string(self):
        cfg = load_run_config(overrides=["--arch=DistMult"])
        assert cfg.arch == "DistMult"


class TestValidation:
    @pytest.mark.parametrize(
        "key", ["dim", "blocks", "groups", "epochs", "batch_size", "u_samples"]
    )
    def test_positive_keys(self, key):
        with pytest.raises(ConfigError, match=f"'{key}'"):
            load_run_config(overrides=[f"--{key.replace('_', '-')}=0"])

    def test_dim_divisible_by_blocks(self):
        with pytest.raises(ConfigError, match="divisible"):
            load_run_config(overrides=["--dim=10", "--blocks=4"])

    def test_bad_tie_rule(self):
        with pytest.raises(ConfigError, match="tie_rule"):
            load_run_config(overrides=["--tie-rule=pessimistic"])

    def test_bad_constraint_scope(self):
        with pytest.raises(ConfigError, match="constraint_scope"):
            load_run_config(overrides=["--constraint-scope=global"])

    def test_bad_eval_split(self):
        with pytest.raises(ConfigError, match="eval_split"):
            load_run_config(overrides=["--eval-split=dev"])

    def test_negative_workers(self):
        with pytest.raises(ConfigError, match="workers"):
            load_run_config(overrides=["--workers=-1"])

    def test_negative_reward_candidates(self):
        with pytest.raises(ConfigError, match="reward_candidates"):
            load_run_config(overrides=["--reward-candidates=-5"])

    def test_zero_reward_candidates_allowed(self):
        cfg = load_run_config(overrides=["--reward-candidates=0"])
        assert cfg.reward_candidates == 0


SYNTH_TOML = """
seed = 11

[synthetic]
n_entities = 40
families = [
    { pattern = "symmetric", count = 2, facts = 60 },
    { pattern = "anti-symmetric", count = 1, facts = 30 },
]
"""


class TestSyntheticSection:
    def test_parsed_spec(self, tmp_path):
        cfg = load_run_config(write_toml(tmp_path, SYNTH_TOML))
        spec = cfg.synthetic
        assert isinstance(spec, SyntheticSpec)
        assert spec.n_entities == 40
        assert [f.pattern for f in spec.families] == ["symmetric", "anti-symmetric"]
        assert [f.count for f in spec.families] == [2, 1]
        assert [f.facts for f in spec.families] == [60, 30]

    def test_seed_defaults_to_run_seed(self, tmp_path):
        cfg = load_run_config(write_toml(tmp_path, SYNTH_TOML))
        assert cfg.synthetic.seed == 11

    def test_explicit_seed_wins(self, tmp_path):
        text = SYNTH_TOML.replace("[synthetic]", "[synthetic]\nseed = 99")
        cfg = load_run_config(write_toml(tmp_path, text))
        assert cfg.synthetic.seed == 99

    def test_unknown_synthetic_key(self, tmp_path):
        text = SYNTH_TOML.replace("n_entities = 40", "n_entities = 40\nentities = 3")
        with pytest.raises(ConfigError, match="unknown \\[synthetic\\] keys"):
            load_run_config(write_toml(tmp_path, text))

    def test_missing_n_entities(self, tmp_path):
        text = SYNTH_TOML.replace("n_entities = 40\n", "")
        with pytest.raises(ConfigError, match="missing required key"):
            load_run_config(write_toml(tmp_path, text))

    def test_unknown_family_key(self, tmp_path):
        text = SYNTH_TOML.replace('count = 2, facts = 60', 'count = 2, facts = 60, size = 1')
        with pytest.raises(ConfigError, match="unknown family keys"):
            load_run_config(write_toml(tmp_path, text))

    def test_family_missing_key(self, tmp_path):
        text = SYNTH_TOML.replace('count = 2, facts = 60 ', 'count = 2 ')
        with pytest.raises(ConfigError, match="missing key"):
            load_run_config(write_toml(tmp_path, text))

    def test_family_validation_runs(self, tmp_path):
        # an unknown pattern should be caught at load time, not at generation
        text = SYNTH_TOML.replace('"symmetric"', '"palindromic"')
        with pytest.raises(Exception, match="pattern"):
            load_run_config(write_toml(tmp_path, text))


class TestDerivedConfigs:
    def test_train_config_mapping(self):
        cfg = load_run_config(
            overrides=[
                "--dim=16", "--batch-size=128", "--learning-rate=0.3",
                "--l2=0.01", "--lr-decay=0.5", "--epochs=7", "--seed=5",
                "--eval-every=2", "--patience=4", "--tie-rule=optimistic",
            ]
        )
        tc = cfg.train_config()
        assert tc.dim == 16
        assert tc.batch_size == 128
        assert tc.learning_rate == 0.3
        assert tc.l2 == 0.01
        assert tc.lr_decay == 0.5
        assert tc.epochs == 7
        assert tc.seed == 5
        assert tc.eval_every == 2
        assert tc.patience == 4
        assert tc.tie_rule == "optimistic"

    def test_search_config_mapping(self):
        cfg = load_run_config(
            overrides=[
                "--groups=3", "--blocks=4", "--dim=16", "--search-epochs=9",
                "--u-samples=4", "--k-derive=8", "--reward-batch=64",
                "--reward-candidates=0", "--single-level=true",
                "--constraint-scope=union", "--ctrl-hidden=16",
                "--ctrl-embed=8", "--ctrl-lr=0.01", "--baseline-decay=0.8",
                "--entropy-weight=0.1",
            ]
        )
        sc = cfg.search_config()
        assert sc.n_groups == 3
        assert sc.n_blocks == 4
        assert sc.dim == 16
        assert sc.epochs == 9
        assert sc.u_samples == 4
        assert sc.k_derive == 8
        assert sc.reward_batch == 64
        assert sc.reward_candidates == 0
        assert sc.single_level is True
        assert sc.constraint_scope == "union"
        assert sc.ctrl_hidden == 16
        assert sc.ctrl_embed == 8
        assert sc.ctrl_lr == 0.01
        assert sc.baseline_decay == 0.8
        assert sc.entropy_weight == 0.1

    def test_search_lr_falls_back_to_learning_rate(self):
        cfg = load_run_config(overrides=["--learning-rate=0.7"])
        assert cfg.search_config().learning_rate == 0.7

    def test_search_lr_override(self):
        cfg = load_run_config(
            overrides=["--learning-rate=0.7", "--search-learning-rate=0.05"]
        )
        assert cfg.search_config().learning_rate == 0.05
        # standalone training is unaffected
        assert cfg.train_config().learning_rate == 0.7
