"""Command-line interface.

Exit codes: 0 success, 1 a property check failed, 2 usage/config error,
3 data error, 4 numeric divergence.

CSV goes to stdout (or ``--out``); human-readable summaries go to stderr,
except for ``verify``, ``taylor`` and ``stats`` whose report is the output.
"""

from __future__ import annotations

import argparse
import difflib
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from . import analysis
from .activations import KIND_NAMES, ActivationKind, InvalidParamsError, LearnableNotSupportedError
from .data import DataError, Dataset, load_idx_dataset, stratified_subset, synth_blobs
from .nn.checkpoint import save_checkpoint
from .nn.init import ForbiddenDistributionError, InitDistribution, InitError
from .nn.layers import ModelSpec
from .nn.optim import AdamConfig, Constant, ExponentialDecay, MultiStep, SGDConfig, StepDecay
from .nn.train import NumericDivergenceError, TrainConfig, train_model
from .tensor import ShapeError

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4
DEFAULT_GRID = (0.01, 0.1, 1.0, 10.0)


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _kind(name: str, args) -> ActivationKind:
    name = name.lower()
    if name not in KIND_NAMES:
        close = difflib.get_close_matches(name, KIND_NAMES, n=3)
        hint = f" (did you mean {', '.join(close)}?)" if close else ""
        raise UsageError(f"unknown activation {name!r}{hint}; known: {', '.join(KIND_NAMES)}")
    return ActivationKind.of(
        name,
        lam=getattr(args, "lam", None),
        mu=getattr(args, "mu", None),
        alpha=getattr(args, "alpha", None),
        beta=getattr(args, "beta", None),
    )


# -- data --------------------------------------------------------------------------


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=("idx", "blobs"), default="idx")
    p.add_argument("--data-dir", default=None,
                   help="directory with MNIST-style IDX files (default: $FPLUS_DATA_DIR)")
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--blob-classes", type=int, default=2)
    p.add_argument("--blob-spread", type=float, default=0.1)


def _load_data(args) -> tuple[Dataset, Dataset]:
    if args.dataset == "blobs":
        train = synth_blobs(args.train_per_class, args.blob_classes, args.blob_spread, args.seed)
        test = synth_blobs(args.test_per_class, args.blob_classes, args.blob_spread, args.seed + 1)
        return train, test
    root = args.data_dir or os.environ.get("FPLUS_DATA_DIR")
    if not root:
        raise FileNotFoundError(
            "no dataset directory: pass --data-dir or set FPLUS_DATA_DIR to a folder containing "
            "train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte, "
            "t10k-labels-idx1-ubyte (optionally .gz)"
        )
    train = load_idx_dataset(root, "train")
    test = load_idx_dataset(root, "test")
    if args.train_per_class > 0:
        train = stratified_subset(train, args.train_per_class, args.seed)
    if args.test_per_class > 0:
        test = stratified_subset(test, args.test_per_class, args.seed)
    return train, test


# -- training flags ---------------------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser, epochs: int) -> None:
    p.add_argument("--model", choices=("lenet5", "lenet", "mlp"), default="lenet5")
    p.add_argument("--hidden", type=int, default=32, help="hidden width of the mlp")
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--lr-decay", choices=("none", "step", "exp", "multistep"), default="none")
    p.add_argument("--decay-gamma", type=float, default=0.1)
    p.add_argument("--decay-period", type=int, default=10)
    p.add_argument("--decay-base", type=float, default=0.98)
    p.add_argument("--milestones", type=_ints, default=[15, 30, 40])
    p.add_argument("--batch-norm", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")


def _config(args) -> TrainConfig:
    try:
        schedule = {
            "none": lambda: Constant(),
            "step": lambda: StepDecay(args.decay_gamma, args.decay_period),
            "exp": lambda: ExponentialDecay(args.decay_base),
            "multistep": lambda: MultiStep(args.decay_gamma, tuple(args.milestones)),
        }[args.lr_decay]()
        optimizer = SGDConfig(args.momentum) if args.optimizer == "sgd" else AdamConfig()
        if args.optimizer == "sgd" and not 0 <= args.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {args.momentum}")
        return TrainConfig(args.epochs, args.batch_size, args.lr, schedule, optimizer, args.seed,
                           args.batch_norm)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _arch(args) -> str:
    return "lenet5" if args.model in ("lenet5", "lenet") else "mlp"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    kind = _kind(args.activation, args)
    report = analysis.verify_activation(kind, seed=args.seed)
    if args.kv:
        sys.stdout.write(f"activation={kind.label}\n" + report.to_kv())
    else:
        print(f"activation {kind.label}")
        for line in report.lines():
            print(line)
    if report.overall:
        print("all conditions PASS")
        return EXIT_OK
    print("FAILED: " + ", ".join(f"condition {c}" for c in report.failing()))
    return EXIT_PROPERTY


@dataclass
class _Cell:
    lam: float
    mu: float
    spec: ModelSpec
    config: TrainConfig


def _run_cell(cell: _Cell, data) -> tuple[float, float, float, float]:
    log = train_model(cell.spec, data, cell.config)
    tr, te = log.final_train, log.final_test
    return tr.loss, tr.accuracy, te.loss if te else math.nan, te.accuracy if te else math.nan


def sweep_rows(lams: Sequence[float], mus: Sequence[float], data, arch: str, config: TrainConfig,
               jobs: int = 1, hidden: int = 32) -> list[tuple]:
    """Train fixed-PFPLUS models over the grid; rows come back in grid order."""
    cells = [
        _Cell(lam, mu, ModelSpec(arch, ActivationKind.of("pfplus", lam=lam, mu=mu), hidden=hidden), config)
        for lam in lams for mu in mus
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells, [data] * len(cells)))
    else:
        results = [_run_cell(c, data) for c in cells]
    return [(c.lam, c.mu, *r) for c, r in zip(cells, results)]


def sweep_csv(rows: Sequence[tuple]) -> str:
    lines = ["lambda,mu,train_loss,train_accuracy,test_loss,test_accuracy"]
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    if not args.lambdas or not args.mus:
        raise UsageError("the lambda and mu grids must be nonempty")
    for v in (*args.lambdas, *args.mus):
        if not v > 0:
            raise UsageError(f"grid values must be positive, got {v}")
    config = _config(args)
    data = _load_data(args)
    rows = sweep_rows(args.lambdas, args.mus, data, _arch(args), config, args.jobs, args.hidden)
    _emit(sweep_csv(rows), args.out)
    best = max(rows, key=lambda r: (r[5], -r[2]))
    _err(f"best cell: lambda={best[0]:g} mu={best[1]:g} test_accuracy={best[5]:.4f} train_loss={best[2]:.4f}")
    return EXIT_OK


def _train_and_report(args, spec: ModelSpec) -> int:
    config = _config(args)
    data = _load_data(args)
    log = train_model(spec, data, config)
    _emit(log.to_csv(), args.out)
    if getattr(args, "checkpoint", None):
        save_checkpoint(args.checkpoint, log.model.named_parameters())
    final = log.final_test or log.final_train
    if final is not None:
        _err(f"final {final.split} accuracy: {final.accuracy:.4f} loss: {final.loss:.4f}")
    return EXIT_OK


def cmd_init_study(args) -> int:
    try:
        lam_dist = InitDistribution.parse(args.lambda_dist)
        mu_dist = InitDistribution.parse(args.mu_dist)
    except InitError as exc:
        raise UsageError(str(exc)) from exc
    if mu_dist.fan_based:
        raise UsageError(
            f"--mu-dist {mu_dist}: Xavier and Kaiming variants must not be applied to mu, "
            "since they bring about negative initialization that violates PFPLUS's mu > 0"
        )
    spec = ModelSpec(_arch(args), ActivationKind.of("pfplus"), learnable=True,
                     lambda_init=lam_dist, mu_init=mu_dist, hidden=args.hidden)
    return _train_and_report(args, spec)


def cmd_train(args) -> int:
    kind = _kind(args.act, args)
    spec = ModelSpec(_arch(args), kind, learnable=args.learnable, hidden=args.hidden)
    return _train_and_report(args, spec)


def cmd_taylor(args) -> int:
    partial, residual = analysis.taylor_residual(args.x, args.n)
    bound = analysis.taylor_bound(args.x, args.n)
    print(f"x={args.x!r} n={args.n}")
    print(f"partial_sum={partial!r}")
    print(f"exact={args.x / (1.0 - args.x)!r}")
    print(f"residual={residual!r}")
    print(f"bound={bound!r}")
    return EXIT_OK


def cmd_stats(args) -> int:
    kind = _kind(args.act, args)
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    m = analysis.output_mean_stat(kind, args.samples, args.seed)
    print(f"activation={kind.label} samples={args.samples} seed={args.seed}")
    print(f"mean={m!r}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------


def _add_kind_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="PFPLUS amplitude")
    p.add_argument("--mu", type=float, default=None, help="PFPLUS scale")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fplus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check conditions I-VI for an activation")
    p.add_argument("activation")
    _add_kind_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kv", action="store_true", help="machine-readable key=value report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="train fixed PFPLUS over a lambda x mu grid")
    p.add_argument("--lambdas", type=_floats, default=list(DEFAULT_GRID))
    p.add_argument("--mus", type=_floats, default=list(DEFAULT_GRID))
    p.add_argument("--jobs", type=int, default=1)
    _add_train_flags(p, epochs=5)
    _add_data_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("init-study", help="train learnable PFPLUS from given initial distributions")
    p.add_argument("--lambda-dist", default="constant:1")
    p.add_argument("--mu-dist", default="constant:1")
    _add_train_flags(p, epochs=5)
    _add_data_flags(p)
    p.set_defaults(func=cmd_init_study)

    p = sub.add_parser("train", help="train one model and write its trajectory CSV")
    p.add_argument("--act", default="fplus")
    p.add_argument("--learnable", action="store_true")
    _add_kind_flags(p)
    p.add_argument("--checkpoint", default=None, help="write final parameters here")
    _add_train_flags(p, epochs=5)
    _add_data_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("taylor", help="geometric-series residual of x/(1-x)")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--n", type=int, default=10)
    p.set_defaults(func=cmd_taylor)

    p = sub.add_parser("stats", help="Monte-Carlo mean of act(Z), Z ~ N(0,1)")
    p.add_argument("--act", required=True)
    _add_kind_flags(p)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, InvalidParamsError, LearnableNotSupportedError, ForbiddenDistributionError,
            analysis.TaylorDomainError) as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except (DataError, ShapeError, FileNotFoundError) as exc:
        _err(f"data error: {exc}")
        return EXIT_DATA
    except NumericDivergenceError as exc:
        _err(f"diverged: {exc}")
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
