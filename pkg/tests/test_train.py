import math

import numpy as np
import pytest

from fplus.activations import ActivationKind
from fplus.data import DataError, load_idx_dataset, stratified_subset, synth_blobs
from fplus.nn.checkpoint import (
    CheckpointError,
    dump_checkpoint,
    load_checkpoint,
    load_checkpoint_bytes,
    restore,
    save_checkpoint,
)
from fplus.nn.layers import ModelSpec, build_model
from fplus.nn.optim import SGDConfig, StepDecay
from fplus.nn.train import NumericDivergenceError, TrainConfig, TrajectoryLog, evaluate, train_model


@pytest.fixture(scope="module")
def blobs():
    return synth_blobs(100, 2, 0.1, seed=0), synth_blobs(50, 2, 0.1, seed=1)


@pytest.fixture(scope="module")
def mnist_small(mnist_dir):
    train = stratified_subset(load_idx_dataset(mnist_dir, "train"), 200, 0)
    test = stratified_subset(load_idx_dataset(mnist_dir, "test"), 100, 0)
    return train, test


PFPLUS_MLP = ModelSpec("mlp", ActivationKind.of("pfplus", lam=1.5, mu=0.5), learnable=True, hidden=16)


class TestTrainModel:
    def test_blobs_are_separated(self, blobs):
        log = train_model(ModelSpec("mlp", ActivationKind.of("fplus")), blobs, TrainConfig(epochs=20, lr0=0.01))
        assert log.final_train.accuracy >= 0.99
        assert log.final_test.accuracy >= 0.99

    def test_zero_epochs(self, blobs):
        log = train_model(PFPLUS_MLP, blobs, TrainConfig(epochs=0))
        assert [r.split for r in log.records] == ["init"]
        assert log.records[0].loss is None
        assert log.records[0].params == [(1.5, 0.5)]

    def test_deterministic(self, blobs):
        cfg = TrainConfig(epochs=3, batch_size=16, seed=4)
        a, b = train_model(PFPLUS_MLP, blobs, cfg), train_model(PFPLUS_MLP, blobs, cfg)
        assert a.to_csv() == b.to_csv()
        assert a.to_csv() != train_model(PFPLUS_MLP, blobs, TrainConfig(epochs=3, batch_size=16, seed=5)).to_csv()

    def test_parameters_stay_positive_every_step(self, blobs):
        seen = []

        def check(model):
            for p in model.positive_parameters():
                seen.append(float(p.data))

        cfg = TrainConfig(epochs=3, lr0=0.5, optimizer=SGDConfig(0.9))
        train_model(ModelSpec("mlp", ActivationKind.of("pfplus", lam=0.01, mu=0.01), learnable=True), blobs, cfg,
                    on_step=check)
        assert seen and min(seen) >= 1e-4

    def test_schedule_and_batch_norm(self, blobs):
        cfg = TrainConfig(epochs=4, batch_size=33, lr0=0.01, schedule=StepDecay(0.5, 2),
                          optimizer=SGDConfig(0.9), batch_norm=True)
        log = train_model(ModelSpec("mlp", ActivationKind.of("relu")), blobs, cfg)
        assert any(type(l).__name__ == "BatchNorm1d" for l in log.model.layers)
        assert log.final_test.accuracy >= 0.99

    def test_singleton_last_batch_with_batch_norm(self, blobs):
        train = synth_blobs(33, 2, 0.1, seed=3)  # 66 = 5 * 13 + 1
        train_model(ModelSpec("mlp"), (train, blobs[1]), TrainConfig(epochs=1, batch_size=13, batch_norm=True))

    def test_incompatible_shapes(self, blobs):
        with pytest.raises(DataError):
            train_model(ModelSpec("lenet5"), blobs, TrainConfig(epochs=1))
        model = build_model(ModelSpec("mlp"), (1, 1, 2), 3, np.random.default_rng(0))
        with pytest.raises(DataError, match="classes"):
            train_model(model, blobs, TrainConfig(epochs=1))

    def test_divergence_reports_epoch_and_batch(self, blobs):
        cfg = TrainConfig(epochs=5, lr0=1e8, optimizer=SGDConfig(0.9))
        with pytest.raises(NumericDivergenceError) as info:
            train_model(ModelSpec("mlp", ActivationKind.of("relu")), blobs, cfg)
        err = info.value
        assert err.epoch >= 1 and err.batch >= 0
        assert f"epoch {err.epoch}" in str(err) and f"batch {err.batch}" in str(err)
        assert err.last_finite_loss is None or math.isfinite(err.last_finite_loss)

    def test_lenet_fplus_reaches_ninety_percent(self, mnist_small):
        cfg = TrainConfig(epochs=5, batch_size=64, lr0=0.001)
        log = train_model(ModelSpec("lenet5", ActivationKind.of("fplus")), mnist_small, cfg)
        assert log.final_test.accuracy >= 0.90
        assert len(log.rows("train")) == 5


class TestTrajectoryLog:
    def test_csv_round_trip(self, blobs):
        log = train_model(PFPLUS_MLP, blobs, TrainConfig(epochs=2))
        text = log.to_csv()
        assert text.splitlines()[0] == "epoch,split,loss,accuracy,lambda_1,mu_1"
        again = TrajectoryLog.from_csv(text)
        assert again.records == log.records
        assert again.to_csv() == text

    def test_accessors(self, blobs):
        log = train_model(PFPLUS_MLP, blobs, TrainConfig(epochs=3))
        assert len(log.lambdas(0)) == 4 and len(log.mus(0)) == 4
        assert log.lambdas(0)[0] == 1.5
        assert [r.epoch for r in log.rows("test")] == [1, 2, 3]

    def test_fixed_activation_leaves_parameter_columns_blank(self, blobs):
        log = train_model(ModelSpec("mlp", ActivationKind.of("relu")), blobs, TrainConfig(epochs=1))
        assert log.to_csv().splitlines()[1] == "0,init,,,,"


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        tensors = {"a": np.arange(6.0).reshape(2, 3), "lam": np.array(1.25), "empty": np.zeros((0, 4))}
        path = tmp_path / "ck.bin"
        save_checkpoint(path, tensors)
        back = load_checkpoint(path)
        assert list(back) == list(tensors)
        for k in tensors:
            assert back[k].shape == tensors[k].shape
            np.testing.assert_array_equal(back[k], tensors[k])

    def test_layout(self):
        raw = dump_checkpoint({"x": np.array([1.0, 2.0])})
        assert raw[:4] == b"FPLK"
        assert raw[4:12] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little")
        assert raw[12:17] == (1).to_bytes(4, "little") + b"x"
        assert raw[17:25] == (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
        assert np.frombuffer(raw[25:], "<f8").tolist() == [1.0, 2.0]

    def test_bad_input(self):
        with pytest.raises(CheckpointError):
            load_checkpoint_bytes(b"NOPE")
        raw = dump_checkpoint({"x": np.ones(3)})
        with pytest.raises(CheckpointError):
            load_checkpoint_bytes(raw[:-4])

    def test_restore_model(self, blobs):
        log = train_model(PFPLUS_MLP, blobs, TrainConfig(epochs=2))
        raw = dump_checkpoint(log.model.named_parameters())
        fresh = build_model(PFPLUS_MLP, (1, 1, 2), 2, np.random.default_rng(99))
        restore(fresh, load_checkpoint_bytes(raw))
        assert evaluate(fresh, blobs[1]) == evaluate(log.model, blobs[1])
        assert fresh.pfplus_trajectory_point() == log.model.pfplus_trajectory_point()
