"""Numerical certification of the six design conditions for an activation.

The conditions, by id:

    I    finite on the whole real line (no reachable pole)
    II   passes through the origin
    III  continuous at the seam x = 0
    IV   differentiable at the seam (one-sided slopes agree)
    V    monotone non-decreasing
    VI   convex

Everything is checked on sample grids with finite differences; nothing here is
symbolic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import activations as act
from .activations import ActivationKind, PfplusParams

CONDITION_IDS = ("I", "II", "III", "IV", "V", "VI")
CONDITION_NAMES = {
    "I": "defined on all reals",
    "II": "passes through origin",
    "III": "continuous at seam",
    "IV": "differentiable at seam",
    "V": "monotone increasing",
    "VI": "convex",
}
DEFAULT_EPSILONS = tuple(10.0 ** -k for k in range(1, 10))
EXTREME_POINTS = (-1e300, 1e300)


class EmptySampleError(ValueError):
    pass


class InvalidCoefficientsError(ValueError):
    """Raised with ``formula`` set to the number (1..7) of the violated constraint."""

    SYMBOLS = {0: "premise", 1: "①", 2: "②", 3: "③", 4: "④", 5: "⑤", 6: "⑥", 7: "⑦"}

    def __init__(self, formula: int, message: str):
        self.formula = formula
        super().__init__(f"formula {self.SYMBOLS[formula]} violated: {message}")


class TaylorDomainError(ValueError):
    pass


# -- property report --------------------------------------------------------------


@dataclass
class ConditionResult:
    passed: bool
    residual: float
    witness: float


@dataclass
class PropertyReport:
    conditions: dict[str, ConditionResult] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(self.conditions[c].passed for c in CONDITION_IDS)

    def failing(self) -> list[str]:
        return [c for c in CONDITION_IDS if not self.conditions[c].passed]

    def __getitem__(self, cid: str) -> ConditionResult:
        return self.conditions[cid]

    def to_kv(self) -> str:
        """Flat ``key=value`` lines, one block of three per condition."""
        lines = []
        for cid in CONDITION_IDS:
            r = self.conditions[cid]
            lines.append(f"{cid}.pass={'true' if r.passed else 'false'}")
            lines.append(f"{cid}.residual={r.residual!r}")
            lines.append(f"{cid}.witness={r.witness!r}")
        lines.append(f"overall={'true' if self.overall else 'false'}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "PropertyReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        report = cls()
        for cid in CONDITION_IDS:
            report.conditions[cid] = ConditionResult(
                kv[f"{cid}.pass"] == "true",
                float(kv[f"{cid}.residual"]),
                float(kv[f"{cid}.witness"]),
            )
        return report

    def lines(self) -> list[str]:
        out = []
        for cid in CONDITION_IDS:
            r = self.conditions[cid]
            status = "PASS" if r.passed else "FAIL"
            out.append(f"condition {cid} {status} witness x={r.witness:g} "
                       f"residual={r.residual:.3e} ({CONDITION_NAMES[cid]})")
        return out


def default_samples(seed: int = 0, n: int = 10_000, half_width: float = 50.0) -> np.ndarray:
    """Uniform grid on (-50, 50) plus the seam neighbourhood and the origin."""
    rng = np.random.default_rng(seed)
    seam = np.array([s * 10.0 ** -k for k in range(1, 10) for s in (-1.0, 1.0)])
    return np.concatenate([rng.uniform(-half_width, half_width, n), seam, [0.0]])


def verify_conditions(
    f: Callable[[np.ndarray], np.ndarray],
    domain_samples: Iterable[float],
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    tol: float = 1e-6,
    *,
    slack: float = 1e-9,
    h: float = 1e-4,
) -> PropertyReport:
    """Check conditions I-VI for an elementwise function ``f``.

    ``tol`` bounds the seam checks (II, III, IV); ``slack`` is the rounding
    allowance for the difference checks (V, VI), which use raw (unscaled)
    forward and second central differences with step ``h``.
    """
    x = np.sort(np.asarray(list(domain_samples), dtype=np.float64))
    if x.size == 0:
        raise EmptySampleError("domain_samples is empty")
    eps = np.asarray(epsilons, dtype=np.float64)
    if eps.size == 0 or np.any(eps <= 0):
        raise ValueError("epsilons must be a nonempty list of positive numbers")

    def F(v):
        with np.errstate(all="ignore"):
            return np.asarray(f(np.asarray(v, dtype=np.float64)), dtype=np.float64)

    report = PropertyReport()

    probe = np.concatenate([x, EXTREME_POINTS])
    fx = F(probe)
    bad = ~np.isfinite(fx)
    report.conditions["I"] = ConditionResult(
        not bad.any(), float(bad.sum()), float(probe[bad][0]) if bad.any() else 0.0
    )

    f0 = float(F(0.0))
    report.conditions["II"] = ConditionResult(abs(f0) <= tol, abs(f0), 0.0)

    gaps = np.abs(F(eps) - F(-eps))
    shrinking = bool(np.all(np.diff(gaps) <= tol))
    report.conditions["III"] = ConditionResult(
        bool(shrinking and gaps[-1] <= tol and abs(float(F(eps[-1])) - f0) <= tol),
        float(gaps[-1]),
        0.0,
    )

    e = float(eps[-1])
    right = (float(F(e)) - f0) / e
    left = (f0 - float(F(-e))) / e
    slope_gap = abs(right - left)
    report.conditions["IV"] = ConditionResult(
        bool(np.isfinite(slope_gap) and slope_gap <= tol), slope_gap, 0.0
    )

    fx = F(x)
    steps = np.diff(fx)
    if steps.size:
        i = int(np.argmin(steps))
        report.conditions["V"] = ConditionResult(bool(steps[i] >= -slack), 0.0 - min(float(steps[i]), 0.0), float(x[i]))
    else:
        report.conditions["V"] = ConditionResult(True, 0.0, float(x[0]))

    second = F(x + h) - 2.0 * fx + F(x - h)
    j = int(np.argmin(second))
    report.conditions["VI"] = ConditionResult(bool(second[j] >= -slack), 0.0 - min(float(second[j]), 0.0), float(x[j]))
    return report


def verify_activation(kind: ActivationKind, seed: int = 0) -> PropertyReport:
    return verify_conditions(lambda v: act.evaluate(kind, v), default_samples(seed))


# -- derivation coefficients ----------------------------------------------------------


@dataclass(frozen=True)
class DerivationCoefficients:
    """Coefficients of the two-branch template

        f(x) = alpha*omega1*x + alpha*beta + theta      x >= 0
             = alpha / (omega2*x + beta) + theta         x <  0
    """

    alpha: float
    beta: float
    omega1: float
    omega2: float
    theta: float

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        xn = np.minimum(x, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            neg = self.alpha / (self.omega2 * xn + self.beta) + self.theta
        out = np.where(x >= 0, self.alpha * self.omega1 * x + self.alpha * self.beta + self.theta, neg)
        return float(out) if out.ndim == 0 else out

    def case(self) -> int:
        return 1 if self.beta == 1 else 2

    def validate(self) -> None:
        """Raise :class:`InvalidCoefficientsError` naming the first violated constraint.

        Checked in the order the derivation introduces them: nonzero finite
        premise, beta = +-1, origin crossing, omega1 = -omega2, pole exclusion,
        monotone slope.
        """
        a, b, w1, w2, t = self.alpha, self.beta, self.omega1, self.omega2, self.theta
        values = (a, b, w1, w2, t)
        if not all(math.isfinite(v) and v != 0 for v in values):
            raise InvalidCoefficientsError(0, "all coefficients must be finite and nonzero")
        if b not in (1, -1):
            raise InvalidCoefficientsError(3, f"beta must be +1 or -1 for continuity, got {b}")
        if a * b + t != 0:
            raise InvalidCoefficientsError(2, f"alpha*beta + theta must be 0 so f(0) = 0, got {a * b + t}")
        if w1 != -w2:
            raise InvalidCoefficientsError(5, f"omega1 must equal -omega2 for a smooth seam, got {w1} and {w2}")
        if not b / w2 < 0:
            raise InvalidCoefficientsError(1, f"beta/omega2 must be negative so the pole lies at x > 0, got {b / w2}")
        if not a * w1 > 0:
            raise InvalidCoefficientsError(7, f"alpha*omega1 must be positive for monotonicity, got {a * w1}")


def coefficients_to_pfplus(c: DerivationCoefficients) -> PfplusParams:
    """Collapse valid template coefficients to PFPLUS (lam = alpha*omega1, mu = |omega1|)."""
    c.validate()
    return PfplusParams(abs(c.alpha * c.omega1), abs(c.omega1))


def random_coefficients(rng: np.random.Generator, case: int,
                        low: float = 0.1, high: float = 10.0) -> DerivationCoefficients:
    """A random coefficient tuple satisfying every constraint for ``case`` 1 or 2."""
    mag_a = rng.uniform(low, high)
    mag_w = rng.uniform(low, high)
    if case == 1:
        return DerivationCoefficients(mag_a, 1.0, mag_w, -mag_w, -mag_a)
    if case == 2:
        return DerivationCoefficients(-mag_a, -1.0, -mag_w, mag_w, -mag_a)
    raise ValueError(f"case must be 1 or 2, got {case}")


# -- series and statistics --------------------------------------------------------


def taylor_residual(x: float, n: int) -> tuple[float, float]:
    """Partial geometric sum ``x + x^2 + ... + x^n`` and its gap to ``x/(1-x)``.

    Both are formed exactly from the binary value of ``x`` (``x = p/q`` with
    ``q`` a power of two) and rounded once; a float subtraction would
    cancel catastrophically once the gap drops below ~1e-16. Cost grows
    quadratically in ``n``.
    """
    if not abs(x) < 1:
        raise TaylorDomainError(f"series converges only for |x| < 1, got x={x}")
    if n < 1:
        raise TaylorDomainError(f"n must be >= 1, got {n}")
    p, q = float(x).as_integer_ratio()
    # partial sum = num / q**n with num_k = num_{k-1} * q + p**k
    num, pk = 0, 1
    for _ in range(n):
        pk *= p
        num = num * q + pk
    qn = q ** n
    gap = abs(p * qn - num * (q - p))  # x/(1-x) - num/qn = gap / ((q-p) qn)
    return num / qn, gap / ((q - p) * qn)


def taylor_bound(x: float, n: int) -> float:
    """``|x|^(n+1) / (1 - |x|)``, exact up to the final rounding."""
    p, q = abs(float(x)).as_integer_ratio()
    return p ** (n + 1) / (q ** n * (q - p))


def output_mean_stat(kind: ActivationKind, sample_count: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of E[act(Z)] for Z ~ N(0, 1)."""
    if sample_count < 1:
        raise ValueError("sample_count must be positive")
    z = np.random.default_rng(seed).standard_normal(sample_count)
    return float(np.mean(act.evaluate(kind, z)))


def saturation_limit(p: PfplusParams) -> float:
    """Infimum of PFPLUS, approached as x -> -inf."""
    return act.saturation_value(p.lam, p.mu)


def pfplus_kind(lam: float, mu: float) -> ActivationKind:
    return ActivationKind.of("pfplus", lam=lam, mu=mu)
