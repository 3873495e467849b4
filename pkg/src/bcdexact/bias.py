"""Selection and accidental bias of the biased-coin design.

Selection bias: an experimenter who always guesses that the next patient
gets the lagging treatment is right with probability

    b_j = 1/2 P(D_{j-1} = 0) + p P(D_{j-1} != 0)

at draw j.  Even draws always follow an odd imbalance, so b_j = p there;
odd draws give the guesser less than p because the walk may be balanced.
Summing b_j over a trial and subtracting the n/2 expected under complete
randomization gives the expected excess of correct guesses, which grows
linearly with slope governed by (r - 1)/(4r).

The per-step series is built from the exact imbalance law; the total is
also available through an independent closed-form double sum so the two
routes can be compared term-free:

    total(n) = 1/2 + (n-1) p
               - (p - 1/2) sum_{m=1}^{floor((n-1)/2)} p^m
                 sum_{l=0}^{m-1} (m-l)/(m+l) C(m+l, l) q^l

Accidental bias: the worst-case inflation of a linear covariate effect is
bounded by the largest eigenvalue of the assignment covariance; for a
specific unit covariate vector z it is the quadratic form z' Sigma z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .covariance import AssignmentCovariance
from .design import DesignParams, Number
from .exact import pmf_at
from .stable import FLOAT64_STABLE, NumericMode

__all__ = [
    "SelectionBiasReport",
    "accidental_bias",
    "asymptotic_excess",
    "selection_bias_report",
    "selection_bias_step",
    "total_bias_closed_form",
]


def selection_bias_step(
    j: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> Number:
    """P(the lagging-arm guess is correct at draw j)."""
    mode = NumericMode.coerce(mode)
    if j < 1:
        raise ValueError(f"draw index must be >= 1, got {j}")
    balanced = pmf_at(j - 1, 0, params, mode)
    half = params.half if mode.is_exact else 0.5
    p = params.p if mode.is_exact else float(params.p)
    return half * balanced + p * (1 - balanced)


@dataclass(frozen=True)
class SelectionBiasReport:
    """Guessing-game summary for an n-patient trial.

    total sums the per-step correct-guess probabilities; excess subtracts
    the n/2 a fair coin would concede; average_excess is excess/n, the
    per-patient advantage (the quantity tabulated on the p grid).
    """

    n: int
    params: DesignParams
    per_step: tuple[Number, ...]

    @property
    def total(self) -> Number:
        if isinstance(self.per_step[0], Fraction):
            return sum(self.per_step, start=Fraction(0))
        return math.fsum(self.per_step)

    @property
    def excess(self) -> Number:
        total = self.total
        if isinstance(total, Fraction):
            return total - Fraction(self.n, 2)
        return total - self.n / 2.0

    @property
    def average_excess(self) -> Number:
        return self.excess / self.n


def selection_bias_report(
    n: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> SelectionBiasReport:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    steps = tuple(selection_bias_step(j, params, mode) for j in range(1, n + 1))
    return SelectionBiasReport(n=n, params=params, per_step=steps)


def total_bias_closed_form(
    n: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> Number:
    """Expected correct guesses over n draws, by the direct double sum.

    Independent of the per-step route: the inner sum is evaluated from its
    own binomial recurrence, not from the imbalance pmf.
    """
    mode = NumericMode.coerce(mode)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if mode.is_exact:
        params = params.as_exact()
        p, q = Fraction(params.p), Fraction(params.q)
        half, one = Fraction(1, 2), Fraction(1)
    else:
        p, q = float(params.p), float(params.q)
        half, one = 0.5, 1.0

    correction = 0 * one
    p_power = one
    for m in range(1, (n - 1) // 2 + 1):
        p_power = p_power * p
        inner = one  # l = 0 summand: (m/m) C(m,0) q^0
        binom = one  # running C(m+l, l)
        q_power = one
        for l in range(1, m):
            binom = binom * (m + l) / l
            q_power = q_power * q
            if mode.is_exact:
                inner += Fraction(m - l, m + l) * binom * q_power
            else:
                inner += ((m - l) / (m + l)) * binom * q_power
        correction = correction + p_power * inner
    return half + (n - 1) * p - (p - half) * correction


def asymptotic_excess(params: DesignParams) -> Number:
    """Limit of excess/n: (r - 1)/(4r), degenerating to 1/4 at p = 1."""
    if params.is_deterministic:
        return Fraction(1, 4) if params.is_exact else 0.25
    if params.is_fair:
        return Fraction(0) if params.is_exact else 0.0
    r = params.r
    return (r - 1) / (4 * r)


def accidental_bias(z: np.ndarray, cov: AssignmentCovariance) -> float:
    """Quadratic form z' Sigma z for a unit covariate direction z.

    z must already be normalized (2-norm 1 within 1e-10); silently
    rescaling would hide mistakes in the caller's covariate prep, so a
    non-unit vector is an error.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.shape[0] != cov.n:
        raise ValueError(f"z must be a vector of length {cov.n}")
    norm = float(np.linalg.norm(z))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"z must be unit length, got ||z|| = {norm!r}")
    return cov.quadratic_form(z)
