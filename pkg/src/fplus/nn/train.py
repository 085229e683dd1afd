"""Training loop and the per-epoch trajectory log."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from ..data import DataError, Dataset
from ..tensor import ShapeError, Tensor, cross_entropy, no_grad
from .layers import Model, ModelSpec, build_model
from .optim import AdamConfig, Constant, SGDConfig, Schedule, lr_at, make_optimizer


class NumericDivergenceError(ArithmeticError):
    def __init__(self, epoch: int, batch: int, last_finite_loss: Optional[float]):
        self.epoch, self.batch, self.last_finite_loss = epoch, batch, last_finite_loss
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} (last finite loss: {last_finite_loss})"
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    lr0: float = 0.001
    schedule: Schedule = field(default_factory=Constant)
    optimizer: Union[SGDConfig, AdamConfig] = field(default_factory=AdamConfig)
    seed: int = 0
    batch_norm: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.lr0 > 0:
            raise ValueError(f"invalid training config: {self}")


@dataclass
class EpochRecord:
    epoch: int
    split: str  # "init", "train" or "test"
    loss: Optional[float]
    accuracy: Optional[float]
    params: list  # per activation layer: (lam, mu) or None


@dataclass
class TrajectoryLog:
    layer_count: int
    records: list[EpochRecord] = field(default_factory=list)
    model: Optional[Model] = field(default=None, compare=False, repr=False)

    def rows(self, split: str) -> list[EpochRecord]:
        return [r for r in self.records if r.split == split]

    def lambdas(self, layer: int) -> list[float]:
        """lambda of activation layer ``layer`` (0-based) at init and after each epoch."""
        return [r.params[layer][0] for r in self.records if r.split in ("init", "train")]

    def mus(self, layer: int) -> list[float]:
        return [r.params[layer][1] for r in self.records if r.split in ("init", "train")]

    @property
    def final_train(self) -> Optional[EpochRecord]:
        rows = self.rows("train")
        return rows[-1] if rows else None

    @property
    def final_test(self) -> Optional[EpochRecord]:
        rows = self.rows("test")
        return rows[-1] if rows else None

    def header(self) -> list[str]:
        cols = ["epoch", "split", "loss", "accuracy"]
        for i in range(1, self.layer_count + 1):
            cols += [f"lambda_{i}", f"mu_{i}"]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        fmt = lambda v: "" if v is None else repr(float(v))
        for r in self.records:
            row = [r.epoch, r.split, fmt(r.loss), fmt(r.accuracy)]
            for p in r.params:
                row += ["", ""] if p is None else [fmt(p[0]), fmt(p[1])]
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrajectoryLog":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        layers = (len(header) - 4) // 2
        parse = lambda s: None if s == "" else float(s)
        log = cls(layers)
        for row in reader:
            params = []
            for i in range(layers):
                lam, mu = parse(row[4 + 2 * i]), parse(row[5 + 2 * i])
                params.append(None if lam is None else (lam, mu))
            log.records.append(EpochRecord(int(row[0]), row[1], parse(row[2]), parse(row[3]), params))
        return log


def _batches(n: int, size: int, order: np.ndarray, merge_singleton: bool) -> list[np.ndarray]:
    chunks = [order[i:i + size] for i in range(0, n, size)]
    if merge_singleton and len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def evaluate(model: Model, data: Dataset, batch_size: int = 500) -> tuple[float, float]:
    """Mean cross-entropy and accuracy with batch-norm layers in eval mode."""
    model.eval()
    total_loss, correct = 0.0, 0
    with no_grad():
        for start in range(0, len(data), batch_size):
            sl = slice(start, start + batch_size)
            logits = model(Tensor(data.images[sl]))
            labels = data.labels[sl]
            total_loss += cross_entropy(logits, labels).item() * len(labels)
            correct += int(np.sum(logits.data.argmax(axis=1) == labels))
    model.train()
    n = max(len(data), 1)
    return total_loss / n, correct / n


def _check_compatible(model: Model, data: Dataset) -> None:
    if tuple(data.sample_shape) != tuple(model.input_shape):
        raise DataError(f"model expects inputs {model.input_shape}, dataset has {data.sample_shape}")
    if data.class_count != model.classes:
        raise DataError(f"model has {model.classes} outputs, dataset has {data.class_count} classes")


def train_model(
    model_or_spec: Union[Model, ModelSpec],
    data: tuple[Dataset, Dataset],
    config: TrainConfig,
    on_step: Optional[Callable[[Model], None]] = None,
) -> TrajectoryLog:
    """Train with cross-entropy and return the per-epoch trajectory.

    A :class:`ModelSpec` is built with the config's seed and batch-norm
    setting; the trained model is available as ``log.model``. ``on_step`` is
    called after every optimizer update.
    """
    train, test = data
    if len(train) == 0:
        raise DataError("training set is empty")
    rng = np.random.default_rng(config.seed)
    if isinstance(model_or_spec, ModelSpec):
        spec = replace(model_or_spec, batch_norm=config.batch_norm)
        try:
            model = build_model(spec, train.sample_shape, train.class_count, rng)
        except ShapeError as exc:
            raise DataError(f"dataset does not fit {spec.arch}: {exc}") from exc
    else:
        model = model_or_spec
    _check_compatible(model, train)
    if len(test):
        _check_compatible(model, test)

    optimizer = make_optimizer(config.optimizer, model.parameters(), model.positive_parameters())
    log = TrajectoryLog(len(model.activation_layers), model=model)
    log.records.append(EpochRecord(0, "init", None, None, model.pfplus_trajectory_point()))
    model.train()
    # overflow is reported as NumericDivergenceError rather than numpy warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        _run_epochs(model, train, test, config, rng, optimizer, log, on_step)
    return log


def _run_epochs(model, train, test, config, rng, optimizer, log, on_step) -> None:
    has_bn = any(type(l).__name__ == "BatchNorm1d" for l in model.layers)
    last_finite: Optional[float] = None
    for epoch in range(1, config.epochs + 1):
        lr = lr_at(config.schedule, config.lr0, epoch - 1)
        order = rng.permutation(len(train))
        loss_sum, correct = 0.0, 0
        for b, idx in enumerate(_batches(len(train), config.batch_size, order, has_bn)):
            logits = model(Tensor(train.images[idx]))
            loss = cross_entropy(logits, train.labels[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise NumericDivergenceError(epoch, b, last_finite)
            last_finite = value
            optimizer.zero_grad()
            loss.backward()
            optimizer.step(lr)
            if on_step is not None:
                on_step(model)
            loss_sum += value * len(idx)
            correct += int(np.sum(logits.data.argmax(axis=1) == train.labels[idx]))
        point = model.pfplus_trajectory_point()
        log.records.append(EpochRecord(epoch, "train", loss_sum / len(train), correct / len(train), point))
        if len(test):
            test_loss, test_acc = evaluate(model, test)
            if not math.isfinite(test_loss):
                raise NumericDivergenceError(epoch, -1, last_finite)
            log.records.append(EpochRecord(epoch, "test", test_loss, test_acc, point))
