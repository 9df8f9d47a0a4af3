"""CLI workflows, exit codes, config precedence and the ablation grid."""

import json

import pytest

from leafalign.cli import main
from leafalign.config import TrainConfig, config_hash, parse_config
from leafalign.errors import ConfigError
from leafalign.evaluate import read_metrics


def gen_args(out, **kwargs):
    base = {
        "n-crops": 2, "n-conditions": 2, "n-classes": 4,
        "samples-per-class": 12, "feature-dim": 8, "noise-sigma": 0.3,
        "crop-signal": 1.5, "class-signal": 1.5, "seed": 0,
    }
    base.update(kwargs)
    args = ["gen-data", "--out", str(out)]
    for key, value in base.items():
        args.extend([f"--{key}", str(value)])
    return args


TRAIN_OVERRIDES = ["--epochs", "3", "--batch-size", "4", "--peak-lr", "3e-3",
                   "--d", "16"]


@pytest.fixture
def tiny_manifest(tmp_path):
    path = tmp_path / "data.tsv"
    assert main(gen_args(path)) == 0
    return path


class TestPipeline:
    def test_gen_train_eval_report(self, tmp_path, tiny_manifest, capsys):
        run_dir = tmp_path / "run"
        assert main(["train", "--data", str(tiny_manifest), "--out",
                     str(run_dir), *TRAIN_OVERRIDES]) == 0
        assert (run_dir / "checkpoint.bin").exists()
        assert (run_dir / "trainlog.jsonl").exists()
        assert (run_dir / "config.txt").exists()

        manifest = json.loads((run_dir / "run.json").read_text())
        assert manifest["config_hash"]
        assert manifest["data_path"] == str(tiny_manifest)

        metrics_path = tmp_path / "metrics.jsonl"
        assert main(["eval", "--run", str(run_dir), "--data",
                     str(tiny_manifest), "--out", str(metrics_path)]) == 0
        header, records = read_metrics(metrics_path)
        names = {name for name, _, _ in records}
        assert {"r_at_1", "r_at_5", "r_at_10", "zero_shot_accuracy"} <= names
        assert header["config_hash"] == manifest["config_hash"]
        assert "retrieval_convention" in header

        assert main(["report", str(metrics_path)]) == 0
        out = capsys.readouterr().out
        assert "r_at_1" in out

    def test_eval_with_probe(self, tmp_path, tiny_manifest):
        run_dir = tmp_path / "run"
        main(["train", "--data", str(tiny_manifest), "--out", str(run_dir),
              *TRAIN_OVERRIDES])
        metrics_path = tmp_path / "metrics.jsonl"
        assert main(["eval", "--run", str(run_dir), "--data",
                     str(tiny_manifest), "--out", str(metrics_path),
                     "--probe-shots", "1", "--probe-runs", "2"]) == 0
        _, records = read_metrics(metrics_path)
        names = {name for name, _, _ in records}
        assert "probe_1shot_mean" in names

    def test_train_determinism_bitwise(self, tmp_path, tiny_manifest):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            assert main(["train", "--data", str(tiny_manifest), "--out",
                         str(d), *TRAIN_OVERRIDES]) == 0
        assert ((dirs[0] / "checkpoint.bin").read_bytes()
                == (dirs[1] / "checkpoint.bin").read_bytes())
        assert ((dirs[0] / "trainlog.jsonl").read_bytes()
                == (dirs[1] / "trainlog.jsonl").read_bytes())


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, tiny_manifest):
        config = tmp_path / "bad.cfg"
        config.write_text("alpha = 1.5\n", encoding="utf-8")
        code = main(["train", "--config", str(config), "--data",
                     str(tiny_manifest), "--out", str(tmp_path / "r")])
        assert code == 2

    def test_unknown_key_is_2(self, tmp_path, tiny_manifest):
        config = tmp_path / "bad.cfg"
        config.write_text("learning = fast\n", encoding="utf-8")
        code = main(["train", "--config", str(config), "--data",
                     str(tiny_manifest), "--out", str(tmp_path / "r")])
        assert code == 2

    def test_data_error_is_3(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "absent.tsv"),
                     "--out", str(tmp_path / "r"), *TRAIN_OVERRIDES])
        assert code == 3

    def test_numerical_error_is_4(self, tmp_path, tiny_manifest):
        """A manifest with a NaN feature fails the encoder's finite check."""
        text = tiny_manifest.read_text(encoding="utf-8")
        lines = text.splitlines()
        for i, line in enumerate(lines):
            if line.startswith("0\t"):
                head, values = line.rsplit("\t", 1)
                parts = values.split()
                parts[0] = "nan"
                lines[i] = head + "\t" + " ".join(parts)
                break
        bad = tiny_manifest.parent / "nan.tsv"
        bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
        code = main(["train", "--data", str(bad), "--out",
                     str(tiny_manifest.parent / "r"), *TRAIN_OVERRIDES])
        assert code == 4


class TestConfigResolution:
    def test_empty_file_gives_paper_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("", encoding="utf-8")
        config = parse_config(path)
        assert config.alpha == 0.1
        assert config.beta == 0.05
        assert config.tau == 0.07
        assert config.weight_decay == 0.2
        assert config.epochs == 20

    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "file.cfg"
        path.write_text("alpha = 0.1\nepochs = 5\n", encoding="utf-8")
        config = parse_config(path, {"alpha": 0.2})
        assert config.alpha == 0.2
        assert config.epochs == 5

    def test_out_of_range_value_rejected(self, tmp_path):
        path = tmp_path / "file.cfg"
        path.write_text("warmup_fraction = 1.5\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_hash_stable_and_sensitive(self):
        a = TrainConfig()
        b = TrainConfig()
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(TrainConfig(alpha=0.2))


class TestAblate:
    def test_grid_runs_and_table(self, tmp_path, tiny_manifest, capsys):
        out_dir = tmp_path / "grid"
        assert main(["ablate", "--data", str(tiny_manifest), "--out",
                     str(out_dir), *TRAIN_OVERRIDES]) == 0
        table = (out_dir / "ablation.txt").read_text(encoding="utf-8")
        assert "R@1" in table and "R@5" in table and "R@10" in table
        for cell in ("short-hard", "short-soft", "long-hard", "long-soft"):
            assert cell in table
            assert (out_dir / cell / "checkpoint.bin").exists()

        hashes = {
            json.loads((out_dir / cell / "run.json").read_text())["config_hash"]
            for cell in ("short-hard", "short-soft", "long-hard", "long-soft")
        }
        assert len(hashes) == 4

    def test_baseline_cell_matches_plain_run(self, tmp_path, tiny_manifest):
        """The short-context hard-label cell is bit-identical to a plain
        training run with the same flags."""
        out_dir = tmp_path / "grid"
        main(["ablate", "--data", str(tiny_manifest), "--out", str(out_dir),
              *TRAIN_OVERRIDES])
        plain = tmp_path / "plain"
        main(["train", "--data", str(tiny_manifest), "--out", str(plain),
              *TRAIN_OVERRIDES, "--context", "short", "--no-soft-targets"])
        assert ((out_dir / "short-hard" / "checkpoint.bin").read_bytes()
                == (plain / "checkpoint.bin").read_bytes())
