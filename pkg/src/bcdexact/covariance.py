"""Covariance structure of the +/-1 assignment sequence.

Assignments are pairwise correlated through the imbalance walk.  For
n < m the joint probability of two treatment-A assignments is

    P(T_n = 1, T_m = 1) = sum_k [ (1/2 - t_{k+1}) fhat_{k+1}(m-n-1) + t_{k+1} ]
                               * P(D_{n-1} = k) * t_k

where t_k = P(T = +1 | imbalance k) and fhat_k(u) is the probability that
the walk returns from k to balance within u steps.  The covariance matrix
then has unit diagonal and sigma_ij = 4 P(T_i = 1, T_j = 1) - 1, because
each assignment is marginally a fair coin.

The return probabilities come from the first-passage law of the biased
walk (toward balance with probability p, away with q):

    f_k(l) = (|k|/l) C(l, (l+|k|)/2) p^((l+|k|)/2) q^((l-|k|)/2)

for l >= |k| of matching parity, else 0.

sigma(n) always carries the vector v = (sqrt(2)/2, -sqrt(2)/2, 0, ..., 0)
as an eigenvector with eigenvalue 2p; `verify_2p_eigenpair` measures the
residual and `eigen_spectrum` computes the whole spectrum with a cyclic
Jacobi rotation sweep (no library eigensolver, so tests can cross-check
against one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .design import DesignParams, Number, transition_prob
from .exact import pmf_dn
from .stable import FLOAT64_STABLE, NumericMode, stable_term_product

__all__ = [
    "AssignmentCovariance",
    "ConvergenceError",
    "FirstVisitTable",
    "cond_assignment",
    "eigen_spectrum",
    "first_visit",
    "joint_assignment",
    "max_eigen_report",
    "sigma",
    "two_p_eigenvector",
    "verify_2p_eigenpair",
]


class ConvergenceError(RuntimeError):
    """Rotation sweep failed to reach the residual tolerance in its budget."""


def first_visit(
    k: int,
    steps: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> Number:
    """P(first return to balance from imbalance k takes exactly `steps`).

    k = 0 is the degenerate visit: 1 at steps = 0, else 0.  Off-parity or
    too-short step counts have probability 0.
    """
    mode = NumericMode.coerce(mode)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    k = abs(k)
    if k == 0:
        one = Fraction(1) if mode.is_exact else 1.0
        return one if steps == 0 else 0 * one
    if steps < k or (steps - k) % 2:
        return Fraction(0) if mode.is_exact else 0.0

    toward = (steps + k) // 2  # moves toward balance, probability p each
    away = (steps - k) // 2
    if mode.is_exact:
        params = params.as_exact()
        p, q = Fraction(params.p), Fraction(params.q)
        return Fraction(k, steps) * math.comb(steps, toward) * p**toward * q**away

    p, q = float(params.p), float(params.q)
    if q == 0.0 and away > 0:
        return 0.0
    small = [k / steps] + [p] * toward + [q] * away
    small += [1.0 / s for s in range(2, away + 1)]
    large = [float(toward + s) for s in range(1, away + 1)]
    return stable_term_product(small, large, mode.sized_for(steps))


class FirstVisitTable:
    """Cumulative first-return probabilities fhat_k(u), memoized per k.

    fhat_k(u) = sum_{l <= u} f_k(l) is the chance the walk re-balances from
    k within u steps; fhat_0 is identically 1.  Rows grow lazily, so one
    table can serve every horizon that shows up while filling a covariance
    matrix.  Not thread-safe while growing; build it before any parallel
    phase.
    """

    def __init__(self, params: DesignParams, mode: NumericMode | str = FLOAT64_STABLE):
        self.params = params
        self.mode = NumericMode.coerce(mode)
        self._one = Fraction(1) if self.mode.is_exact else 1.0
        self._rows: dict[int, list[Number]] = {}

    def f(self, k: int, steps: int) -> Number:
        return first_visit(k, steps, self.params, self.mode)

    def f_hat(self, k: int, horizon: int) -> Number:
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        k = abs(k)
        if k == 0:
            return self._one
        row = self._rows.setdefault(k, [0 * self._one])  # fhat_k(0) = 0
        while len(row) <= horizon:
            u = len(row)
            row.append(row[-1] + self.f(k, u))
        return row[horizon]


def cond_assignment(
    m: int,
    n: int,
    k: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
    table: FirstVisitTable | None = None,
) -> Number:
    """P(T_m = +1 | D_n = k) for m > n >= 1.

    Conditioning on an impossible event (|k| > n or wrong parity) returns 0
    by convention.  The walk either re-balances within m - n - 1 steps, in
    which case the next toss is fair, or it is still on k's side of zero
    and the toss favours the lagging arm:

        (1/2 - t_k) * fhat_k(m - n - 1) + t_k
    """
    mode = NumericMode.coerce(mode)
    if mode.is_exact:
        params = params.as_exact()
    if not 1 <= n < m:
        raise ValueError(f"need 1 <= n < m, got n={n}, m={m}")
    if abs(k) > n or (n - k) % 2:
        return Fraction(0) if mode.is_exact else 0.0
    if table is None:
        table = FirstVisitTable(params, mode)
    t_k = transition_prob(params, k)
    half = params.half if mode.is_exact else 0.5
    if mode.is_exact:
        t_k = Fraction(t_k)
    else:
        t_k = float(t_k)
    return (half - t_k) * table.f_hat(k, m - n - 1) + t_k


PmfProvider = Callable[[int, int], Number]


def _pmf_row_provider(params: DesignParams, mode: NumericMode) -> PmfProvider:
    cache: dict[int, dict[int, Number]] = {}

    def provider(n: int, k: int) -> Number:
        if n not in cache:
            cache[n] = dict(pmf_dn(n, params, mode).masses)
        zero = Fraction(0) if mode.is_exact else 0.0
        return cache[n].get(k, zero)

    return provider


def joint_assignment(
    n: int,
    m: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
    pmf_provider: PmfProvider | None = None,
    table: FirstVisitTable | None = None,
) -> Number:
    """P(T_n = +1, T_m = +1) for 1 <= n < m.

    Decomposes over the imbalance k just before draw n; each term is the
    chance of sitting at k, times t_k for drawing +1, times the conditional
    chance that draw m is +1 given the post-draw imbalance k + 1.
    """
    mode = NumericMode.coerce(mode)
    if mode.is_exact:
        params = params.as_exact()
    if not 1 <= n < m:
        raise ValueError(f"need 1 <= n < m, got n={n}, m={m}")
    if pmf_provider is None:
        pmf_provider = _pmf_row_provider(params, mode)
    if table is None:
        table = FirstVisitTable(params, mode)

    half = params.half if mode.is_exact else 0.5
    horizon = m - n - 1
    terms = []
    for k in range(-(n - 1), n):
        if (n - 1 - k) % 2:
            continue
        mass = pmf_provider(n - 1, k)
        if not mass:
            continue
        t_k = transition_prob(params, k)
        t_up = transition_prob(params, k + 1)
        if mode.is_exact:
            t_k, t_up = Fraction(t_k), Fraction(t_up)
        else:
            t_k, t_up = float(t_k), float(t_up)
        cond = (half - t_up) * table.f_hat(k + 1, horizon) + t_up
        terms.append(cond * mass * t_k)
    if mode.is_exact:
        return sum(terms, start=Fraction(0))
    return math.fsum(terms)


@dataclass(frozen=True)
class AssignmentCovariance:
    """Covariance matrix Sigma of (T_1, ..., T_n); entries are 1-indexed.

    Entries do not depend on the horizon n: sigma(i, j) is the same in
    every matrix large enough to contain it, so `principal` can carve out
    the matrix of a shorter trial for free.
    """

    n: int
    params: DesignParams
    matrix: np.ndarray  # dtype float64, or object (Fraction) in exact mode

    @property
    def is_exact(self) -> bool:
        return self.matrix.dtype == object

    def entry(self, i: int, j: int) -> Number:
        if not (1 <= i <= self.n and 1 <= j <= self.n):
            raise IndexError(f"indices out of range 1..{self.n}: ({i}, {j})")
        value = self.matrix[i - 1, j - 1]
        return value if self.is_exact else float(value)

    def as_array(self) -> np.ndarray:
        if self.is_exact:
            return self.matrix.astype(float)
        return self.matrix

    def principal(self, n: int) -> "AssignmentCovariance":
        if not 1 <= n <= self.n:
            raise ValueError(f"principal size must be in 1..{self.n}")
        return AssignmentCovariance(n, self.params, self.matrix[:n, :n])

    def quadratic_form(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        a = self.as_array()
        return float(z @ a @ z)


def sigma(
    n: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> AssignmentCovariance:
    """Covariance matrix of the first n assignments, sigma_ij = 4 P_ij - 1."""
    mode = NumericMode.coerce(mode)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if mode.is_exact:
        params = params.as_exact()
        out = np.empty((n, n), dtype=object)
        one = Fraction(1)
    else:
        params = params.as_float()
        out = np.empty((n, n), dtype=float)
        one = 1.0
    provider = _pmf_row_provider(params, mode)
    table = FirstVisitTable(params, mode)
    for i in range(1, n + 1):
        out[i - 1, i - 1] = one
        for j in range(i + 1, n + 1):
            joint = joint_assignment(i, j, params, mode, provider, table)
            value = 4 * joint - 1
            out[i - 1, j - 1] = value
            out[j - 1, i - 1] = value
    return AssignmentCovariance(n=n, params=params, matrix=out)


# ---------------------------------------------------------------------------
# spectrum


def _off_norm(a: np.ndarray) -> float:
    strict = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(strict * strict)))


def eigen_spectrum(
    cov: AssignmentCovariance | np.ndarray,
    tol: float = 1e-10,
    max_rotations: int | None = None,
) -> np.ndarray:
    """All eigenvalues, descending, via cyclic Jacobi rotation sweeps.

    Each rotation zeroes one off-diagonal pair through an orthogonal
    similarity, preserving the trace and (by Wielandt-Hoffman) pinning the
    eigenvalue error to the off-diagonal Frobenius norm, which must fall
    below tol.  Raises ConvergenceError if the rotation budget (default
    100 n^2) runs out first.
    """
    a = cov.as_array() if isinstance(cov, AssignmentCovariance) else np.asarray(cov, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    a = np.array(a, dtype=float)  # working copy
    if n == 1:
        return np.array([a[0, 0]])
    if max_rotations is None:
        max_rotations = 100 * n * n

    skip = tol / (2.0 * n)
    rotations = 0
    while _off_norm(a) > tol:
        for i in range(n - 1):
            for j in range(i + 1, n):
                apq = a[i, j]
                if abs(apq) <= skip:
                    continue
                if rotations >= max_rotations:
                    raise ConvergenceError(
                        f"no convergence after {rotations} rotations "
                        f"(off-diagonal norm {_off_norm(a):.3e} > tol {tol:g})"
                    )
                rotations += 1
                tau = (a[j, j] - a[i, i]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                row_i, row_j = a[i, :].copy(), a[j, :].copy()
                a[i, :] = c * row_i - s * row_j
                a[j, :] = s * row_i + c * row_j
                col_i, col_j = a[:, i].copy(), a[:, j].copy()
                a[:, i] = c * col_i - s * col_j
                a[:, j] = s * col_i + c * col_j
                a[i, j] = a[j, i] = 0.0
    return np.sort(np.diag(a))[::-1]


def two_p_eigenvector(n: int) -> np.ndarray:
    """Unit vector (sqrt(2)/2, -sqrt(2)/2, 0, ..., 0) of length n >= 2."""
    if n < 2:
        raise ValueError("need n >= 2")
    v = np.zeros(n)
    v[0] = math.sqrt(2.0) / 2.0
    v[1] = -v[0]
    return v


def verify_2p_eigenpair(
    n: int,
    params: DesignParams,
    cov: AssignmentCovariance | None = None,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> float:
    """Residual || sigma v - 2p v ||_2 for the contrast of the first two draws.

    The first two assignments satisfy sigma_12 = 1 - 2p and every later
    column sees them symmetrically, which is exactly why v is an
    eigenvector with eigenvalue 2p.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if cov is None:
        cov = sigma(n, params, mode)
    a = cov.as_array()
    v = two_p_eigenvector(n)
    resid = a @ v - 2.0 * float(params.p) * v
    return float(np.linalg.norm(resid))


@dataclass(frozen=True)
class MaxEigenReport:
    """Diagnostic for the conjecture that 2p is the largest eigenvalue."""

    n: int
    p: float
    lambda_max: float
    two_p: float

    @property
    def gap(self) -> float:
        return self.lambda_max - self.two_p

    @property
    def agrees(self) -> bool:
        return abs(self.gap) <= 1e-8


def max_eigen_report(
    n: int,
    params: DesignParams,
    cov: AssignmentCovariance | None = None,
    tol: float = 1e-10,
) -> MaxEigenReport:
    """Compare the computed spectral maximum with 2p.

    Whether 2p is always the maximum is an open question, so this is a
    report for inspection, never an assertion: callers log the gap instead
    of failing on it.
    """
    if cov is None:
        cov = sigma(n, params)
    spectrum = eigen_spectrum(cov, tol=tol)
    return MaxEigenReport(
        n=n,
        p=float(params.p),
        lambda_max=float(spectrum[0]),
        two_p=2.0 * float(params.p),
    )
