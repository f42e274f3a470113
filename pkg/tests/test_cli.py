import numpy as np
import pytest

from hinet.cli import main
from tests.conftest import PAIR_TREE_TEXT

WORKED_POSTERIORS = "0.6 0.4\n0.3 0.5 0.2\n1.0\n"


@pytest.fixture
def hier_file(tmp_path):
    path = tmp_path / "h.txt"
    path.write_text(PAIR_TREE_TEXT)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestValidate:
    def test_valid_tree(self, capsys, hier_file):
        code, out, _ = run(capsys, "validate", "--hierarchy", hier_file)
        assert code == 0
        assert out == (
            "kind: tree\nheight: 2\nlevel sizes: 2 2\nedges: 2\ntraces: 4\n"
        )

    def test_two_parent_child_under_tree(self, capsys, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text(PAIR_TREE_TEXT + "edge A D\n")
        code, _, err = run(capsys, "validate", "--hierarchy", str(path))
        assert code == 1
        assert "parents" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "validate", "--hierarchy", str(tmp_path / "nope"))
        assert code == 2


class TestBench:
    def test_golden_output(self, capsys):
        code, out, _ = run(capsys, "bench", "128", "10", "4")
        assert code == 0
        assert out == (
            "flatten params (k*n^h): 1,280,000\n"
            "hinet params (k*n + h*n^2): 1,680\n"
            "ratio: 761.9\n"
        )


class TestInfer:
    def test_worked_example(self, capsys, hier_file, tmp_path):
        post = tmp_path / "p.txt"
        post.write_text(WORKED_POSTERIORS)
        code, out, _ = run(
            capsys, "infer", "--hierarchy", hier_file, "--posteriors", str(post)
        )
        assert code == 0
        assert out == "B/D  logp=-1.609438\n"

    def test_oracle_agreement(self, capsys, hier_file, tmp_path):
        post = tmp_path / "p.txt"
        post.write_text(WORKED_POSTERIORS)
        code, out, _ = run(
            capsys, "infer", "--hierarchy", hier_file,
            "--posteriors", str(post), "--oracle",
        )
        assert code == 0
        assert out == "B/D  logp=-1.609438\nagreement: exact\n"

    def test_bad_posterior_sum(self, capsys, hier_file, tmp_path):
        post = tmp_path / "p.txt"
        post.write_text("0.6 0.2\n0.3 0.5 0.2\n1.0\n")
        code, _, err = run(
            capsys, "infer", "--hierarchy", hier_file, "--posteriors", str(post)
        )
        assert code == 4
        assert "sums to" in err


class TestVerify:
    def test_small_run(self, capsys):
        code, out, _ = run(capsys, "verify", "--instances", "25", "--seed", "9")
        assert code == 0
        assert out == "verified 25 instances: theorems 1-3 hold\n"


class TestGenDataTrainEval:
    def _gen(self, capsys, hier_file, tmp_path, **kw):
        data = tmp_path / "d.txt"
        code, out, _ = run(
            capsys, "gen-data", "--hierarchy", hier_file, "--out", str(data),
            "--samples-per-trace", "8", "--spread", "0.02",
            "--d-in", "6", "--seed", "1",
        )
        assert code == 0
        assert "32 samples" in out
        return data

    def test_train_transcript_deterministic(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        argv = [
            "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--model", "hinet", "--epochs", "4", "--lr", "0.5", "--seed", "3",
            "--out", str(tmp_path / "m.ckpt"),
        ]
        code1, out1, _ = run(capsys, *argv)
        code2, out2, _ = run(capsys, *argv)
        assert code1 == code2 == 0
        assert out1 == out2
        lines = out1.splitlines()
        assert len(lines) == 5
        assert lines[0].startswith("epoch 1 loss ")

    def test_eval_output_shape(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        ckpt = tmp_path / "m.ckpt"
        run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--model", "hinet", "--epochs", "60", "--lr", "0.5",
            "--batch-size", "8", "--seed", "3", "--out", str(ckpt),
        )
        code, out, _ = run(
            capsys, "eval", "--hierarchy", hier_file,
            "--dataset", str(data), "--ckpt", str(ckpt),
        )
        assert code == 0
        assert out.startswith("trace accuracy: ")
        assert "level 1 accuracy: " in out and "level 2 accuracy: " in out

    def test_flatten_warns_with_both_counts(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        code, out, err = run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--model", "flatten", "--epochs", "2", "--seed", "3",
        )
        assert code == 0
        assert "warning" in err and "k*n^h" in err and "k*n + h*n^2" in err

    def test_zero_epochs_rejected(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        code, _, err = run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--epochs", "0",
        )
        assert code == 4
        assert "epochs" in err

    def test_flat_infer_roundtrip(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        ckpt = tmp_path / "f.ckpt"
        run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--model", "flatten", "--epochs", "40", "--lr", "0.5",
            "--batch-size", "8", "--seed", "3", "--out", str(ckpt),
        )
        features = data.read_text().splitlines()[0].split("\t")[0]
        code, out, _ = run(
            capsys, "infer", "--hierarchy", hier_file,
            "--ckpt", str(ckpt), f"--features={features}",
        )
        assert code == 0
        assert "logp=" in out

    def test_oracle_rejected_for_flatten(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        ckpt = tmp_path / "f.ckpt"
        run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--model", "flatten", "--epochs", "2", "--seed", "3",
            "--out", str(ckpt),
        )
        code, _, err = run(
            capsys, "infer", "--hierarchy", hier_file, "--ckpt", str(ckpt),
            "--features=0,0,0,0,0,0", "--oracle",
        )
        assert code == 4
        assert "--oracle" in err

    def test_checkpoint_hierarchy_mismatch(self, capsys, hier_file, tmp_path):
        data = self._gen(capsys, hier_file, tmp_path)
        ckpt = tmp_path / "m.ckpt"
        run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--model", "hinet", "--epochs", "2", "--seed", "3", "--out", str(ckpt),
        )
        other = tmp_path / "other.txt"
        other.write_text("levels 1\nnodes 1 A B\n")
        with open(tmp_path / "d1.txt", "w") as f:
            f.write("0.1,0.2\tA\n0.3,0.4\tB\n")
        code, _, err = run(
            capsys, "eval", "--hierarchy", str(other),
            "--dataset", str(tmp_path / "d1.txt"), "--ckpt", str(ckpt),
        )
        assert code == 4
        assert "different hierarchy" in err


class TestConfigFile:
    def test_config_supplies_values_and_flags_override(
        self, capsys, hier_file, tmp_path
    ):
        data = tmp_path / "d.txt"
        run(
            capsys, "gen-data", "--hierarchy", hier_file, "--out", str(data),
            "--samples-per-trace", "6", "--spread", "0.05", "--d-in", "5",
            "--seed", "2",
        )
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 3\nlr = 0.25\nseed = 4  # comment\n")
        code, out, _ = run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--config", str(cfg),
        )
        assert code == 0
        assert len(out.splitlines()) == 3

        code, out, _ = run(
            capsys, "train", "--hierarchy", hier_file, "--dataset", str(data),
            "--config", str(cfg), "--epochs", "2",
        )
        assert code == 0
        assert len(out.splitlines()) == 2

    def test_malformed_config(self, capsys, hier_file, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs 3\n")
        code, _, err = run(
            capsys, "verify", "--config", str(cfg), "--instances", "1"
        )
        assert code == 4
        assert "key = value" in err
