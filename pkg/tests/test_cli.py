import subprocess
import sys

import pytest

from fplus.cli import main
from fplus.nn.checkpoint import load_checkpoint
from fplus.nn.train import TrajectoryLog

SMALL = ["--train-per-class", "20", "--test-per-class", "10"]


@pytest.fixture(autouse=True)
def data_dir(monkeypatch, mnist_dir):
    monkeypatch.setenv("FPLUS_DATA_DIR", str(mnist_dir))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestVerify:
    def test_fplus_passes(self, capsys):
        code, out, _ = run(capsys, "verify", "fplus")
        assert code == 0
        assert sum("PASS" in line for line in out.splitlines() if line.startswith("condition")) == 6

    def test_relu_fails_iv(self, capsys):
        code, out, _ = run(capsys, "verify", "relu")
        assert code == 1
        assert "condition IV FAIL witness x=0" in out

    def test_pfplus_params(self, capsys):
        assert run(capsys, "verify", "pfplus", "--lambda", "0.1", "--mu", "10")[0] == 0

    def test_invalid_params(self, capsys):
        code, _, err = run(capsys, "verify", "pfplus", "--lambda", "1", "--mu", "-2")
        assert code == 2 and "mu" in err

    def test_unknown_activation_suggests(self, capsys):
        code, _, err = run(capsys, "verify", "fpluss")
        assert code == 2 and "did you mean fplus" in err

    def test_kv_output(self, capsys):
        code, out, _ = run(capsys, "verify", "sigmoid", "--kv")
        assert code == 1 and "II.pass=false" in out


class TestTaylorAndStats:
    def test_taylor(self, capsys):
        code, out, _ = run(capsys, "taylor", "--x", "0.5", "--n", "3")
        assert code == 0
        assert "partial_sum=0.875" in out and "residual=0.125" in out

    def test_taylor_domain(self, capsys):
        assert run(capsys, "taylor", "--x", "1.5")[0] == 2

    def test_stats_relu(self, capsys):
        code, out, _ = run(capsys, "stats", "--act", "relu", "--samples", "1000000")
        mean = float(out.split("mean=")[1])
        assert code == 0 and abs(mean - 0.3989) < 2e-3


class TestTrain:
    def test_csv_and_checkpoint(self, capsys, tmp_path):
        ck = tmp_path / "model.fplk"
        code, out, err = run(capsys, "train", "--model", "lenet", "--act", "fplus", "--epochs", "2",
                             "--checkpoint", str(ck), *SMALL)
        assert code == 0
        log = TrajectoryLog.from_csv(out)
        assert [r.epoch for r in log.rows("train")] == [1, 2]
        assert "final test accuracy" in err
        assert "1.conv2d.k" in load_checkpoint(ck)

    def test_deterministic_bytes(self, capsys, tmp_path):
        args = ["train", "--model", "mlp", "--act", "pfplus", "--learnable", "--epochs", "2", "--seed", "3",
                "--lr-decay", "step", "--decay-gamma", "0.5", "--decay-period", "1", *SMALL]
        run(capsys, *args, "--out", str(tmp_path / "a.csv"))
        run(capsys, *args, "--out", str(tmp_path / "b.csv"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_sgd_exp_decay_batch_norm(self, capsys):
        code, _, _ = run(capsys, "train", "--model", "mlp", "--optimizer", "sgd", "--lr-decay", "exp",
                         "--batch-norm", "on", "--epochs", "1", *SMALL)
        assert code == 0

    def test_missing_data(self, capsys, monkeypatch, tmp_path):
        monkeypatch.delenv("FPLUS_DATA_DIR")
        code, _, err = run(capsys, "train", "--epochs", "1")
        assert code == 3 and "train-images-idx3-ubyte" in err
        code, _, err = run(capsys, "train", "--epochs", "1", "--data-dir", str(tmp_path))
        assert code == 3 and "t10k-labels-idx1-ubyte" in err

    def test_incompatible_model(self, capsys):
        assert run(capsys, "train", "--model", "lenet5", "--dataset", "blobs", "--epochs", "1")[0] == 3

    def test_divergence(self, capsys):
        code, _, err = run(capsys, "train", "--model", "mlp", "--dataset", "blobs", "--act", "relu",
                           "--optimizer", "sgd", "--lr", "1e8", "--epochs", "5")
        assert code == 4
        assert "epoch" in err and "batch" in err and "last finite loss" in err

    def test_bad_config(self, capsys):
        assert run(capsys, "train", "--optimizer", "sgd", "--momentum", "1.5", *SMALL)[0] == 2
        assert run(capsys, "train", "--lr-decay", "step", "--decay-gamma", "2", *SMALL)[0] == 2
        assert run(capsys, "train", "--act", "relu", "--learnable", *SMALL)[0] == 2

    def test_unknown_flag(self, capsys):
        assert run(capsys, "train", "--frobnicate")[0] == 2


class TestInitStudy:
    def test_forbidden_mu(self, capsys):
        code, _, err = run(capsys, "init-study", "--mu-dist", "kaiming-normal")
        assert code == 2 and "mu" in err and "negative" in err

    def test_normal_pair(self, capsys):
        code, out, _ = run(capsys, "init-study", "--lambda-dist", "normal:1,0.3", "--mu-dist", "normal:1,0.1",
                           "--epochs", "1", *SMALL)
        assert code == 0
        log = TrajectoryLog.from_csv(out)
        assert all(p is not None for p in log.records[0].params)

    def test_bad_grammar(self, capsys):
        assert run(capsys, "init-study", "--lambda-dist", "uniform:3,1")[0] == 2


class TestSweep:
    def test_single_cell(self, capsys):
        code, out, err = run(capsys, "sweep", "--lambdas", "1", "--mus", "1", "--epochs", "1", *SMALL)
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "lambda,mu,train_loss,train_accuracy,test_loss,test_accuracy"
        assert len(lines) == 2
        assert "lambda=1 mu=1" in err

    def test_parallel_matches_serial_in_grid_order(self, capsys):
        args = ["sweep", "--lambdas", "0.1,1", "--mus", "1,0.1", "--epochs", "1", "--model", "mlp", *SMALL]
        _, serial, _ = run(capsys, *args)
        _, parallel, _ = run(capsys, *args, "--jobs", "2")
        assert serial == parallel
        cells = [tuple(line.split(",")[:2]) for line in serial.splitlines()[1:]]
        assert cells == [("0.1", "1.0"), ("0.1", "0.1"), ("1.0", "1.0"), ("1.0", "0.1")]

    def test_default_grid(self):
        from fplus.cli import build_parser

        args = build_parser().parse_args(["sweep"])
        assert args.lambdas == args.mus == [0.01, 0.1, 1.0, 10.0]

    def test_nonpositive_grid(self, capsys):
        assert run(capsys, "sweep", "--lambdas", "0", "--mus", "1")[0] == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fplus", "taylor", "--x", "-0.5", "--n", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "partial_sum=-0.375" in proc.stdout
