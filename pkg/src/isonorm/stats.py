"""Monte-Carlo estimates, batch-means errors and check records."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .rng import RngStream

MIN_BATCHES = 30
DEFAULT_BATCHES = 100


@dataclass(frozen=True)
class Estimate:
    """A Monte-Carlo value with its standard error and provenance."""

    value: float
    std_error: float
    count: int
    stream: RngStream | None = None
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "std_error", float(self.std_error))
        object.__setattr__(self, "count", int(self.count))

    @classmethod
    def exact(cls, value: float, name: str = "", **meta) -> "Estimate":
        return cls(value, 0.0, 0, None, name, meta)

    def scaled(self, c: float) -> "Estimate":
        return Estimate(c * self.value, abs(c) * self.std_error, self.count,
                        self.stream, self.name, dict(self.meta))

    @property
    def rel_error(self) -> float:
        return self.std_error / abs(self.value) if self.value else math.inf

    def to_record(self) -> dict:
        rec = {"name": self.name, "value": self.value, "se": self.std_error,
               "count": self.count}
        if self.stream is not None:
            rec.update(seed=self.stream.seed, stream=self.stream.stream_id)
        if self.meta:
            rec["meta"] = self.meta
        return rec

    def __str__(self):
        return f"{self.value:.6g} ± {self.std_error:.2g} (n={self.count})"


def n_batches_for(count: int, n_batches: int = DEFAULT_BATCHES) -> int:
    return max(1, min(n_batches, count))


def batch_means_se(values: np.ndarray, n_batches: int = DEFAULT_BATCHES) -> float:
    """Standard error of the mean of ``values`` (along axis 0) by batch means."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    b = n_batches_for(n, n_batches)
    if n < 2:
        return 0.0 if n else math.nan
    if b < 2:
        return float(np.std(values, ddof=1) / math.sqrt(n))
    means = np.array([chunk.mean(axis=0) for chunk in np.array_split(values, b)])
    return np.std(means, axis=0, ddof=1) / math.sqrt(b)


def mean_estimate(values: np.ndarray, stream: RngStream | None = None, name: str = "",
                  n_batches: int = DEFAULT_BATCHES, **meta) -> Estimate:
    values = np.asarray(values, dtype=float)
    return Estimate(float(values.mean()), float(batch_means_se(values, n_batches)),
                    values.shape[0], stream, name, meta)


def batch_statistic(values: np.ndarray, stat: Callable[[np.ndarray], float],
                    n_batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Full-sample value of a (smooth) statistic and its batch-spread error.

    The statistic is recomputed on each of ``n_batches`` contiguous batches;
    the error is the standard deviation of those values divided by
    ``sqrt(n_batches)``.
    """
    values = np.asarray(values)
    full = float(stat(values))
    b = n_batches_for(values.shape[0], n_batches)
    if b < 2:
        return full, math.nan
    per = np.array([stat(chunk) for chunk in np.array_split(values, b)])
    return full, float(np.std(per, ddof=1) / math.sqrt(b))


def combined_se(*errors: float) -> float:
    return math.sqrt(sum(float(e) ** 2 for e in errors))


def z_score(a: Estimate | float, b: Estimate | float) -> float:
    """|a - b| in units of the combined standard error (0/0 counts as 0)."""
    va, sa = (a.value, a.std_error) if isinstance(a, Estimate) else (float(a), 0.0)
    vb, sb = (b.value, b.std_error) if isinstance(b, Estimate) else (float(b), 0.0)
    diff = abs(va - vb)
    se = combined_se(sa, sb)
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / se


def product_estimate(a: Estimate, b: Estimate, name: str = "") -> Estimate:
    """Product of two independent estimates, error by the delta method."""
    value = a.value * b.value
    se = math.sqrt((a.std_error * b.value) ** 2 + (b.std_error * a.value) ** 2)
    return Estimate(value, se, a.count + b.count, a.stream, name)


PASS, FAIL, REPORT_ONLY = "pass", "fail", "report-only"


@dataclass
class Check:
    """One verdict-bearing (or report-only) record.

    ``value`` and ``threshold`` are in the units named by ``unit``; a check
    passes when ``value <= threshold`` unless ``direction`` is ``">="``.
    """

    name: str
    value: float
    se: float = 0.0
    threshold: float | None = None
    direction: str = "<="
    unit: str = ""
    anchor: str = ""
    details: dict = field(default_factory=dict)
    verdict: str = ""

    def __post_init__(self):
        self.value = float(self.value)
        self.se = float(self.se)
        if not self.verdict:
            self.verdict = self.judge()

    def judge(self) -> str:
        if self.threshold is None:
            return REPORT_ONLY
        if not math.isfinite(self.value):
            return FAIL
        ok = self.value <= self.threshold if self.direction == "<=" else self.value >= self.threshold
        return PASS if ok else FAIL

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL

    def to_record(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "value": self.value,
                "se": self.se, "threshold": self.threshold, "direction": self.direction,
                "unit": self.unit, "verdict": self.verdict, "details": self.details}


def ks_statistic(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Kolmogorov-Smirnov distance between the empirical law of ``samples`` and ``cdf``."""
    return float(stats.kstest(np.asarray(samples, dtype=float).ravel(), cdf).statistic)
