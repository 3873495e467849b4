"""Sequence generation, exhaustive enumeration and Monte Carlo estimation.

Single sequences come from a counter-based Philox stream so that replicate
r of seed s is reproducible on any machine and any degree of parallelism:
stream (s, r) is `SeedSequence(s, spawn_key=(r,))`.  Monte Carlo runs
split their replicates into fixed-size batches, one stream per batch, and
batches are merged in index order, so estimates are a pure function of
(seed, replicates, batch_size) regardless of how many workers ran them.

`enumerate_exact` walks all 2^n assignment paths with their exact
probabilities (n capped at 16, which stays under a second) and is the
brute-force oracle the closed-form results are tested against.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .covariance import AssignmentCovariance
from .design import DesignParams, Number
from .stable import FLOAT64_STABLE, NumericMode

__all__ = [
    "ENUMERATION_CAP",
    "McEstimate",
    "PathStatistic",
    "ScoreVector",
    "TreatmentSequence",
    "enumerate_exact",
    "generate_sequence",
    "mc_estimate",
    "parse_statistic",
    "rank_pvalue_mc",
    "rank_statistic",
    "rank_statistic_variance",
    "stat_balance",
    "stat_correct_guess",
    "stat_imbalance_sq",
    "stat_product",
]

ENUMERATION_CAP = 16
DEFAULT_BATCH_SIZE = 1 << 16


@dataclass(frozen=True)
class TreatmentSequence:
    """One realized run of +/-1 assignments and its running imbalance."""

    assignments: np.ndarray
    params: DesignParams
    seed: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.assignments, dtype=np.int8)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("assignments must be a nonempty vector")
        if not np.all(np.abs(arr) == 1):
            raise ValueError("assignments must be +1 or -1")
        object.__setattr__(self, "assignments", arr)

    def __len__(self) -> int:
        return int(self.assignments.size)

    @property
    def imbalance_path(self) -> np.ndarray:
        return np.cumsum(self.assignments, dtype=np.int64)

    @property
    def final_imbalance(self) -> int:
        return int(self.imbalance_path[-1])


def _stream(seed: int, index: int | None = None) -> np.random.Generator:
    key = (index,) if index is not None else ()
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def generate_sequence(n: int, params: DesignParams, seed: int) -> TreatmentSequence:
    """Simulate one biased-coin run of length n, deterministic in seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p = float(params.p)
    q = float(params.q)
    u = _stream(seed).random(n)
    out = np.empty(n, dtype=np.int8)
    d = 0
    for j in range(n):
        up = 0.5 if d == 0 else (p if d < 0 else q)
        t = 1 if u[j] < up else -1
        out[j] = t
        d += t
    return TreatmentSequence(assignments=out, params=params, seed=seed)


# ---------------------------------------------------------------------------
# path statistics


@dataclass(frozen=True)
class PathStatistic:
    """A functional of one assignment path (t_1..t_n, d_1..d_n).

    per_path sees a single path as index-able sequences and should return
    an int/Fraction when exact enumeration matters.  per_batch, when given,
    maps the (replicates x n) assignment and imbalance matrices to a vector
    of values and keeps Monte Carlo fully vectorized.
    """

    name: str
    per_path: Callable[[Sequence[int], Sequence[int]], Number]
    per_batch: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def batch_values(self, t: np.ndarray, d: np.ndarray) -> np.ndarray:
        if self.per_batch is not None:
            return np.asarray(self.per_batch(t, d), dtype=float)
        return np.array(
            [float(self.per_path(t[i], d[i])) for i in range(t.shape[0])]
        )


def _coerce_statistic(statistic) -> PathStatistic:
    if isinstance(statistic, PathStatistic):
        return statistic
    if callable(statistic):
        return PathStatistic(name=getattr(statistic, "__name__", "statistic"),
                             per_path=statistic)
    raise TypeError(f"not a statistic: {statistic!r}")


def stat_balance() -> PathStatistic:
    """Indicator of perfect terminal balance, D_n == 0."""
    return PathStatistic(
        name="balance",
        per_path=lambda t, d: 1 if d[-1] == 0 else 0,
        per_batch=lambda t, d: (d[:, -1] == 0).astype(float),
    )


def stat_imbalance_sq() -> PathStatistic:
    """D_n squared; its mean is Var(D_n)."""
    return PathStatistic(
        name="variance",
        per_path=lambda t, d: d[-1] * d[-1],
        per_batch=lambda t, d: (d[:, -1].astype(float)) ** 2,
    )


def stat_product(i: int, j: int) -> PathStatistic:
    """T_i * T_j (1-indexed); its mean is the covariance entry sigma_ij."""
    if not 1 <= i < j:
        raise ValueError(f"need 1 <= i < j, got ({i}, {j})")
    return PathStatistic(
        name=f"cov({i},{j})",
        per_path=lambda t, d: t[i - 1] * t[j - 1],
        per_batch=lambda t, d: (t[:, i - 1] * t[:, j - 1]).astype(float),
    )


def stat_correct_guess(j: int) -> PathStatistic:
    """Credit for guessing the lagging arm right before draw j.

    Ties (balanced groups) score 1/2 instead of tossing a guess coin: same
    expectation, less Monte Carlo variance, and exact enumeration stays
    rational.
    """
    if j < 1:
        raise ValueError(f"draw index must be >= 1, got {j}")

    def per_path(t, d):
        prev = d[j - 2] if j >= 2 else 0
        if prev == 0:
            return Fraction(1, 2)
        return 1 if (t[j - 1] > 0) == (prev < 0) else 0

    def per_batch(t, d):
        prev = d[:, j - 2] if j >= 2 else np.zeros(t.shape[0], dtype=np.int64)
        correct = (t[:, j - 1] > 0) == (prev < 0)
        return np.where(prev == 0, 0.5, correct.astype(float))

    return PathStatistic(name=f"guess@{j}", per_path=per_path, per_batch=per_batch)


_COV_RE = re.compile(r"^cov\((\d+),\s*(\d+)\)$")


def parse_statistic(text: str, n: int) -> PathStatistic:
    """Named statistics: balance, variance, selection-bias, cov(i,j)."""
    text = text.strip()
    if text == "balance":
        return stat_balance()
    if text == "variance":
        return stat_imbalance_sq()
    if text == "selection-bias":
        return stat_correct_guess(n)
    m = _COV_RE.match(text)
    if m:
        i, j = int(m.group(1)), int(m.group(2))
        if not 1 <= i < j <= n:
            raise ValueError(f"cov indices must satisfy 1 <= i < j <= {n}")
        return stat_product(i, j)
    raise ValueError(
        f"unknown statistic {text!r}; expected balance, variance, "
        "selection-bias or cov(i,j)"
    )


# ---------------------------------------------------------------------------
# exhaustive enumeration (the 2^n oracle)


def enumerate_exact(
    n: int,
    params: DesignParams,
    statistic,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> Number:
    """E[statistic] by summing all 2^n paths with their exact weights.

    Exponential on purpose; n is capped at ENUMERATION_CAP.  In rational
    mode with rational p (and an int/Fraction-valued statistic) the result
    is exact.
    """
    mode = NumericMode.coerce(mode)
    if not 1 <= n <= ENUMERATION_CAP:
        raise ValueError(f"enumeration needs 1 <= n <= {ENUMERATION_CAP}, got {n}")
    stat = _coerce_statistic(statistic)
    if mode.is_exact:
        params = params.as_exact()
        p, q, half = Fraction(params.p), Fraction(params.q), Fraction(1, 2)
        total = Fraction(0)
    else:
        p, q, half = float(params.p), float(params.q), 0.5
        total = 0.0

    t_path = [0] * n
    d_path = [0] * n

    def walk(depth: int, d: int, weight):
        nonlocal total
        if depth == n:
            total += weight * stat.per_path(t_path, d_path)
            return
        up = half if d == 0 else (p if d < 0 else q)
        for t, w in ((1, up), (-1, 1 - up)):
            if not w:
                continue
            t_path[depth] = t
            d_path[depth] = d + t
            walk(depth + 1, d + t, weight * w)

    one = Fraction(1) if mode.is_exact else 1.0
    walk(0, 0, one)
    return total


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McEstimate:
    """Sample mean, its standard error, and the replicate count behind it."""

    point: float
    std_error: float
    replicates: int


def _simulate_batch(
    n: int, p: float, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized lockstep simulation of `size` independent runs."""
    q = 1.0 - p
    u = rng.random((size, n))
    t = np.empty((size, n), dtype=np.int8)
    d_mat = np.empty((size, n), dtype=np.int64)
    d = np.zeros(size, dtype=np.int64)
    for j in range(n):
        up = np.where(d == 0, 0.5, np.where(d < 0, p, q))
        col = np.where(u[:, j] < up, 1, -1).astype(np.int8)
        t[:, j] = col
        d += col
        d_mat[:, j] = d
    return t, d_mat


def mc_estimate(
    n: int,
    params: DesignParams,
    statistic,
    replicates: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    jobs: int = 1,
) -> McEstimate:
    """Monte Carlo mean of a path statistic with its standard error.

    Replicates are dealt into batches of batch_size; batch b uses the
    independent stream (seed, b), so any number of workers produces the
    same estimate.  std_error is s / sqrt(replicates) with s the sample
    standard deviation.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    stat = _coerce_statistic(statistic)
    p = float(params.p)

    sizes = []
    left = replicates
    while left > 0:
        sizes.append(min(batch_size, left))
        left -= sizes[-1]

    def run(index_size) -> tuple[float, float]:
        index, size = index_size
        t, d = _simulate_batch(n, p, _stream(seed, index), size)
        values = stat.batch_values(t, d)
        return float(values.sum()), float((values * values).sum())

    tasks = list(enumerate(sizes))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            partials = list(pool.map(run, tasks))
    else:
        partials = [run(task) for task in tasks]

    total = math.fsum(s for s, _ in partials)
    total_sq = math.fsum(s2 for _, s2 in partials)
    mean = total / replicates
    var = max(total_sq - replicates * mean * mean, 0.0) / (replicates - 1)
    return McEstimate(
        point=mean,
        std_error=math.sqrt(var / replicates),
        replicates=replicates,
    )


# ---------------------------------------------------------------------------
# linear rank statistics


@dataclass(frozen=True)
class ScoreVector:
    """Score coefficients a_1..a_n for the linear statistic W = a'T.

    centered means the scores were built to sum to zero, which the
    constructor enforces to one part in 1e10; rank-based scores are
    centered by construction via `centered_ranks`.
    """

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("scores must be a nonempty vector")
        if self.centered and abs(float(arr.sum())) > 1e-10:
            raise ValueError(
                f"centered scores must sum to 0, got {float(arr.sum())!r}"
            )
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def as_array(self) -> np.ndarray:
        return self.values

    @classmethod
    def from_values(cls, values, center: bool = False) -> "ScoreVector":
        arr = np.asarray(values, dtype=float)
        if center:
            arr = arr - arr.mean()
        return cls(values=arr, centered=center)

    @classmethod
    def centered_ranks(cls, outcomes) -> "ScoreVector":
        """Midranks of the outcomes (ties averaged), centered to sum 0."""
        arr = np.asarray(outcomes, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("outcomes must be a nonempty vector")
        _, inverse, counts = np.unique(arr, return_inverse=True, return_counts=True)
        upper = np.cumsum(counts)
        mid = upper - (counts - 1) / 2.0  # average rank within each tie group
        ranks = mid[inverse]
        return cls(values=ranks - (arr.size + 1) / 2.0, centered=True)


def _scores_array(scores) -> np.ndarray:
    if isinstance(scores, ScoreVector):
        return scores.as_array()
    return np.asarray(scores, dtype=float)


def rank_statistic(scores, assignments) -> float:
    """W = a'T for one realized assignment sequence."""
    a = _scores_array(scores)
    t = assignments.assignments if isinstance(assignments, TreatmentSequence) else assignments
    t = np.asarray(t, dtype=float)
    if a.shape != t.shape:
        raise ValueError(f"scores and assignments disagree: {a.shape} vs {t.shape}")
    return float(a @ t)


def rank_statistic_variance(scores, cov: AssignmentCovariance) -> float:
    """Var(W) = a' Sigma a under the design's covariance."""
    a = _scores_array(scores)
    if a.size != cov.n:
        raise ValueError(f"scores length {a.size} does not match n = {cov.n}")
    return float(a @ cov.as_array() @ a)


def rank_pvalue_mc(
    scores,
    observed: float,
    params: DesignParams,
    replicates: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> float:
    """Two-sided Monte Carlo p-value for W with the add-one correction."""
    a = _scores_array(scores)
    if replicates < 1:
        raise ValueError("need at least 1 replicate")
    n = a.size
    p = float(params.p)
    hits = 0
    done = 0
    index = 0
    while done < replicates:
        size = min(batch_size, replicates - done)
        t, _ = _simulate_batch(n, p, _stream(seed, index), size)
        w = t.astype(float) @ a
        hits += int(np.count_nonzero(np.abs(w) >= abs(observed) - 1e-12))
        done += size
        index += 1
    return (hits + 1) / (replicates + 1)
