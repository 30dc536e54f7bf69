"""End-to-end tests for the command line interface.

Everything runs in-process through main(argv) so exit codes and artifacts
can be checked without spawning subprocesses.
"""

import json

import pytest

from sfsearch.cli import main

SYNTH_DS = """
out = "{out}"

[synthetic]
n_entities = 30
seed = 3
families = [
    {{ pattern = "symmetric", count = 2, facts = 60 }},
]
"""

TRAIN_BASE = """
dataset = "{dataset}"
dim = 8
epochs = 4
eval_every = 2
batch_size = 128
learning_rate = 0.5
seed = 5
"""


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    cfg = write(root / "synth.toml", SYNTH_DS.format(out=root / "data"))
    assert main(["synth", "--config", cfg]) == 0
    return root / "data"


@pytest.fixture(scope="module")
def train_cfg(tmp_path_factory, dataset_dir):
    root = tmp_path_factory.mktemp("cfg")
    return write(root / "train.toml", TRAIN_BASE.format(dataset=dataset_dir))


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, train_cfg):
    out = tmp_path_factory.mktemp("trained") / "run"
    code = main(
        ["train", "--config", train_cfg, "--arch", "DistMult", f"--out={out}"]
    )
    assert code == 0
    return out


class TestUsageErrors:
    def test_no_command(self, capsys):
        assert main([]) == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_config_key(self, capsys):
        assert main(["patterns", "--dims=16"]) == 1
        assert "dims" in capsys.readouterr().err

    def test_bad_override_value(self):
        assert main(["patterns", "--epochs=ten"]) == 1

    def test_eval_needs_checkpoint(self):
        assert main(["eval"]) == 1

    def test_train_needs_arch(self, train_cfg, tmp_path):
        assert main(["train", "--config", train_cfg, f"--out={tmp_path}"]) == 1

    def test_no_dataset_configured(self, tmp_path, capsys):
        code = main(["train", "--arch", "DistMult", f"--out={tmp_path}"])
        assert code == 1
        assert "dataset" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["patterns", "--config", str(tmp_path / "nope.toml")]) == 1


class TestSynthAndPatterns:
    def test_synth_writes_splits(self, dataset_dir):
        for name in ("train.txt", "valid.txt", "test.txt"):
            assert (dataset_dir / name).exists()
        lines = (dataset_dir / "train.txt").read_text().strip().splitlines()
        assert len(lines) > 0
        assert all(len(line.split("\t")) == 3 for line in lines)

    def test_synth_reports_patterns(self, tmp_path, capsys):
        cfg = write(tmp_path / "s.toml", SYNTH_DS.format(out=tmp_path / "d"))
        assert main(["synth", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "sym0_0" in out
        assert "symmetric" in out

    def test_synth_without_table(self, tmp_path):
        assert main(["synth", f"--out={tmp_path / 'd'}"]) == 1

    def test_patterns_table(self, dataset_dir, capsys):
        assert main(["patterns", f"--dataset={dataset_dir}"]) == 0
        out = capsys.readouterr().out
        assert "sym0_0" in out
        assert "sym0_1" in out
        assert "symmetric" in out

    def test_patterns_missing_dataset(self, tmp_path, capsys):
        code = main(["patterns", f"--dataset={tmp_path / 'absent'}"])
        assert code == 2


class TestTrain:
    def test_artifacts(self, trained_dir):
        for name in (
            "manifest.json", "entities.bin", "relations.bin",
            "assignment.tsv", "architecture.txt",
            "metrics.json", "per_pattern.csv", "report.txt",
        ):
            assert (trained_dir / name).exists(), name

    def test_metrics_sane(self, trained_dir):
        metrics = json.loads((trained_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["mrr"] <= 1.0
        assert 0.0 <= metrics["hit10"] <= 1.0

    def test_manifest_points_at_dataset(self, trained_dir, dataset_dir):
        manifest = json.loads((trained_dir / "manifest.json").read_text())
        assert manifest["dataset"] == str(dataset_dir)
        assert manifest["architecture"] == "1 2 : 1 0 0 3"

    def test_per_pattern_rows(self, trained_dir):
        lines = (trained_dir / "per_pattern.csv").read_text().strip().splitlines()
        # header plus one row per relation
        assert len(lines) == 1 + 2

    def test_bad_token_line_is_usage_error(self, train_cfg, tmp_path, capsys):
        code = main([
            "train", "--config", train_cfg,
            "--arch", "1 2 : 9 0 0 0", f"--out={tmp_path}",
        ])
        assert code == 1
        assert "token" in capsys.readouterr().err

    def test_multigroup_needs_groups_from(self, train_cfg, tmp_path, capsys):
        code = main([
            "train", "--config", train_cfg,
            "--arch", "2 2 : 1 0 0 3 0 1 3 0", f"--out={tmp_path}",
        ])
        assert code == 1
        assert "groups_from" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_run_is_numerical_error(self, train_cfg, tmp_path):
        code = main([
            "train", "--config", train_cfg, "--arch", "DistMult",
            f"--out={tmp_path}", "--learning-rate=1e160",
        ])
        assert code == 3

    def test_seed_determinism(self, train_cfg, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main([
                "train", "--config", train_cfg, "--arch", "DistMult",
                f"--out={out}",
            ])
            assert code == 0
            outs.append(out)
        a, b = ((p / "metrics.json").read_bytes() for p in outs)
        assert a == b
        a, b = ((p / "entities.bin").read_bytes() for p in outs)
        assert a == b


class TestResume:
    def test_resume_matches_uninterrupted(self, train_cfg, trained_dir, tmp_path):
        half = tmp_path / "half"
        code = main([
            "train", "--config", train_cfg, "--arch", "DistMult",
            f"--out={half}", "--epochs=2",
        ])
        assert code == 0
        resumed = tmp_path / "resumed"
        code = main([
            "train", "--config", train_cfg, "--arch", "DistMult",
            "--resume", str(half), f"--out={resumed}",
        ])
        assert code == 0
        assert (resumed / "metrics.json").read_bytes() == \
            (trained_dir / "metrics.json").read_bytes()
        assert (resumed / "entities.bin").read_bytes() == \
            (trained_dir / "entities.bin").read_bytes()

    def test_resume_arch_mismatch(self, train_cfg, trained_dir, tmp_path, capsys):
        code = main([
            "train", "--config", train_cfg, "--arch", "ComplEx",
            "--resume", str(trained_dir), f"--out={tmp_path / 'x'}",
        ])
        assert code == 1
        assert "does not match" in capsys.readouterr().err


class TestEval:
    def test_eval_matches_train_metrics(self, trained_dir, tmp_path):
        out = tmp_path / "eval"
        code = main(["eval", "--checkpoint", str(trained_dir), f"--out={out}"])
        assert code == 0
        trained = json.loads((trained_dir / "metrics.json").read_text())
        evaled = json.loads((out / "metrics.json").read_text())
        assert evaled["mrr"] == trained["mrr"]

    def test_missing_checkpoint(self, tmp_path):
        code = main(["eval", "--checkpoint", str(tmp_path / "none")])
        assert code == 2

    def test_corrupt_blob(self, train_cfg, tmp_path, capsys):
        out = tmp_path / "run"
        code = main([
            "train", "--config", train_cfg, "--arch", "DistMult", f"--out={out}",
        ])
        assert code == 0
        (out / "entities.bin").write_bytes(b"garbage")
        code = main(["eval", "--checkpoint", str(out), f"--out={tmp_path / 'e'}"])
        assert code == 2

    def test_dataset_shape_mismatch(self, trained_dir, tmp_path, capsys):
        other = tmp_path / "other"
        cfg = write(
            tmp_path / "o.toml",
            SYNTH_DS.format(out=other).replace("n_entities = 30", "n_entities = 20"),
        )
        assert main(["synth", "--config", cfg]) == 0
        code = main([
            "eval", "--checkpoint", str(trained_dir),
            f"--dataset={other}", f"--out={tmp_path / 'e'}",
        ])
        assert code == 2
        assert "entities" in capsys.readouterr().err


SEARCH_CFG = """
out = "{out}"
dim = 8
blocks = 2
groups = 1
search_epochs = 1
epochs = 2
eval_every = 1
batch_size = 64
u_samples = 2
reward_batch = 32
reward_candidates = 0
k_derive = 16
ctrl_hidden = 8
ctrl_embed = 4
learning_rate = 0.4
seed = 0

[synthetic]
n_entities = 30
seed = 3
families = [
    {{ pattern = "symmetric", count = 2, facts = 60 }},
]
"""


class TestSearch:
    def test_smoke(self, tmp_path, capsys):
        out = tmp_path / "run"
        cfg = write(tmp_path / "s.toml", SEARCH_CFG.format(out=out))
        assert main(["search", "--config", cfg]) == 0
        assert (out / "search_log.csv").exists()
        header = (out / "search_log.csv").read_text().splitlines()[0]
        assert "reward" in header
        # supernet checkpoint keeps the policy for later derives
        assert (out / "supernet" / "manifest.json").exists()
        assert (out / "supernet" / "policy.bin").exists()
        # final retrained model with metrics
        metrics = json.loads((out / "final" / "metrics.json").read_text())
        assert 0.0 <= metrics["mrr"] <= 1.0
        # generated dataset persisted for later eval runs
        assert (out / "dataset" / "train.txt").exists()
        assert "derived" in capsys.readouterr().out

    def test_final_checkpoint_evaluable(self, tmp_path):
        out = tmp_path / "run"
        cfg = write(tmp_path / "s.toml", SEARCH_CFG.format(out=out))
        assert main(["search", "--config", cfg]) == 0
        code = main([
            "eval", "--checkpoint", str(out / "final"), f"--out={tmp_path / 'e'}",
        ])
        assert code == 0
