"""Exact law of the treatment imbalance under the biased-coin rule.

D_n is the difference between the two group sizes after n assignments.  Its
distribution is symmetric, supported on {-n, -n+2, ..., n}, and has the
closed form (k and n of equal parity, 0 < k <= n)

    P(D_n = +-k) = (1/2) p^((n-k)/2)
                   * sum_{l=0}^{(n-k)/2} (n+k-2l)/(n+k+2l)
                                         * C((n+k)/2 + l, l) * q^(k+l-1)

and, for even n,

    P(D_n = 0) = p^(n/2)
                 * sum_{l=0}^{n/2 - 1} (n-2l)/(n+2l) * C(n/2 + l, l) * q^l.

Each summand is evaluated either exactly over Fractions or in float64
through the guarded product kernel in `stable`.  A forward recurrence on
the same law (`dp_pmf_dn`) is kept as an independent cross-check route and
is never substituted for the closed form.

The absolute imbalance |D_n| is an ergodic birth-death chain whose
stationary law pi has the geometric form pi_0 = (r-1)/(2r),
pi_j = (r^2-1)/(2 r^(j+1)) with r = p/q; `steady_state_threshold` locates
the sample size from which the finite-n law stays within a given relative
tolerance of that limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .design import DesignParams, Number
from .stable import (
    FLOAT64_STABLE,
    NumericMode,
    stable_term_product,
    sum_term_values,
)

__all__ = [
    "ImbalancePMF",
    "StationaryDist",
    "asymptotic_var",
    "dp_pmf_dn",
    "pmf_at",
    "pmf_dn",
    "stationary_pmf",
    "steady_state_threshold",
    "term_factors",
    "var_dn",
]


def _require_exact(params: DesignParams) -> DesignParams:
    return params.as_exact()


def _zero(mode: NumericMode):
    return Fraction(0) if mode.is_exact else 0.0


# ---------------------------------------------------------------------------
# closed-form point masses


def term_factors(
    n: int, k: int, l: int, params: DesignParams
) -> tuple[list[float], list[float]]:
    """Factor decomposition of the l-th summand of the closed form.

    Returns (small, large): small factors lie in (0, 1] (probabilities,
    reciprocals of 1..l, the leading ratio and the 1/2 for k > 0), large
    factors are the binomial numerators (n+k)/2 + 1 .. (n+k)/2 + l.  For
    k > 0 there are (n+k)/2 + 2l small factors; for k = 0 there are
    n/2 + 2l.  Terms that are identically zero (q == 0 with a positive
    q-power) must be skipped by the caller; a zero is not a valid factor.
    """
    p = float(params.p)
    q = float(params.q)
    if k > 0:
        a = (n + k) // 2
        small = [0.5, (n + k - 2 * l) / (n + k + 2 * l)]
        small += [p] * ((n - k) // 2)
        small += [q] * (k + l - 1)
    else:
        a = n // 2
        small = [(n - 2 * l) / (n + 2 * l)]
        small += [p] * (n // 2)
        small += [q] * l
    small += [1.0 / s for s in range(2, l + 1)]
    large = [float(a + s) for s in range(1, l + 1)]
    return small, large


def _term_exact(n: int, k: int, l: int, p: Fraction, q: Fraction) -> Fraction:
    if k > 0:
        return (
            Fraction(1, 2)
            * Fraction(n + k - 2 * l, n + k + 2 * l)
            * math.comb((n + k) // 2 + l, l)
            * p ** ((n - k) // 2)
            * q ** (k + l - 1)
        )
    return (
        Fraction(n - 2 * l, n + 2 * l)
        * math.comb(n // 2 + l, l)
        * p ** (n // 2)
        * q**l
    )


def pmf_at(
    n: int,
    k: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> Number:
    """P(D_n = k) from the closed form; 0 off the parity support."""
    mode = NumericMode.coerce(mode)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    k = abs(k)
    if k > n or (n - k) % 2:
        return _zero(mode)
    if n == 0:
        return Fraction(1) if mode.is_exact else 1.0

    n_terms = (n - k) // 2 if k > 0 else n // 2
    if mode.is_exact:
        params = _require_exact(params)
        p, q = Fraction(params.p), Fraction(params.q)
        upper = n_terms if k > 0 else n_terms - 1
        return sum(
            (_term_exact(n, k, l, p, q) for l in range(upper + 1)),
            start=Fraction(0),
        )

    sized = mode.sized_for(n)
    q = float(params.q)
    upper = n_terms if k > 0 else n_terms - 1
    values = []
    for l in range(upper + 1):
        q_power = k + l - 1 if k > 0 else l
        if q == 0.0 and q_power > 0:
            continue
        small, large = term_factors(n, k, l, params)
        values.append(stable_term_product(small, large, sized))
    return sum_term_values(values)


@dataclass(frozen=True)
class ImbalancePMF:
    """Distribution of D_n on its parity support, symmetric in k."""

    n: int
    params: DesignParams
    masses: Mapping[int, Number]

    def mass(self, k: int) -> Number:
        zero = Fraction(0) if self.is_exact else 0.0
        return self.masses.get(k, zero)

    def two_sided(self, k: int) -> Number:
        """P(|D_n| = |k|)."""
        k = abs(k)
        return self.mass(0) if k == 0 else 2 * self.mass(k)

    @property
    def is_exact(self) -> bool:
        return any(isinstance(v, Fraction) for v in self.masses.values())

    def support(self) -> list[int]:
        return sorted(self.masses)

    def total(self) -> Number:
        return sum(self.masses.values())

    def variance(self) -> Number:
        """E[D_n^2]; the mean is 0 by symmetry."""
        return sum(k * k * v for k, v in self.masses.items())


def pmf_dn(
    n: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> ImbalancePMF:
    """Full law of D_n via the closed form, one point mass per support k."""
    mode = NumericMode.coerce(mode)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    masses: dict[int, Number] = {}
    for k in range(n % 2, n + 1, 2):
        v = pmf_at(n, k, params, mode)
        masses[k] = v
        if k:
            masses[-k] = v
    return ImbalancePMF(n=n, params=params, masses=masses)


def _dp_rows(
    n: int, params: DesignParams, mode: NumericMode
) -> Iterable[list[Number]]:
    """Rows of signed masses [P(D_j = 0), P(D_j = 1), ..., P(D_j = j)].

    Forward recurrence: the mass at 0 collects both neighbours (2p * mass
    at 1), the mass at 1 gets half of the balanced mass plus p times the
    mass at 2, interior k gets q * mass(k-1) + p * mass(k+1), and the
    extreme k = j+1 is reached only from j with probability q.
    """
    if mode.is_exact:
        params = _require_exact(params)
        one, half = Fraction(1), Fraction(1, 2)
    else:
        params = params.as_float()
        one, half = 1.0, 0.5
    p, q = params.p, params.q

    zero = one * 0
    row: list[Number] = [one]
    yield row
    for j in range(n):
        prev = row + [zero, zero]  # pad so prev[k+1] is always valid
        row = [zero] * (j + 2)
        row[0] = 2 * p * prev[1]
        row[1] = half * prev[0] + p * prev[2]
        for k in range(2, j + 1):
            row[k] = q * prev[k - 1] + p * prev[k + 1]
        if j >= 1:
            # top state j+1 is reachable only from j, and only via the
            # away-from-balance branch; at j = 0 the k = 1 rule above
            # already accounts for the fair first toss
            row[j + 1] = q * prev[j]
        yield row


def dp_pmf_dn(
    n: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> ImbalancePMF:
    """Law of D_n via the forward recurrence (cross-check route)."""
    mode = NumericMode.coerce(mode)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    for row in _dp_rows(n, params, mode):
        pass
    masses: dict[int, Number] = {}
    for k in range(n % 2, n + 1, 2):
        masses[k] = row[k]
        if k:
            masses[-k] = row[k]
    return ImbalancePMF(n=n, params=params, masses=masses)


def var_dn(
    n: int,
    params: DesignParams,
    mode: NumericMode | str = FLOAT64_STABLE,
) -> Number:
    """Var(D_n) = E[D_n^2] = sum over k >= 1 of k^2 P(|D_n| = k)."""
    mode = NumericMode.coerce(mode)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    start = 1 if n % 2 else 2
    terms = [
        k * k * 2 * pmf_at(n, k, params, mode) for k in range(start, n + 1, 2)
    ]
    if mode.is_exact:
        return sum(terms, start=Fraction(0))
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# stationary behaviour of |D_n|


@dataclass(frozen=True)
class StationaryDist:
    """Stationary law of the absolute imbalance chain (needs p > 1/2).

    Because the chain is periodic with period 2, the finite-n laws converge
    along each parity to twice the stationary mass: P(|D_n| = k) -> 2 pi_k
    over n of k's parity.  At p = 1 the limiting values are taken:
    pi_0 = pi_1 = 1/2, all other states vanish.
    """

    params: DesignParams

    def __post_init__(self):
        if self.params.is_fair:
            raise ValueError(
                "p = 1/2 is complete randomization; |D_n| is a null-recurrent "
                "walk with no stationary distribution"
            )

    def pi(self, j: int) -> Number:
        if j < 0:
            raise ValueError("state index must be >= 0")
        params = self.params
        if params.is_deterministic:
            half = params.half
            return half if j in (0, 1) else 0 * half
        r = params.r
        if j == 0:
            return (r - 1) / (2 * r)
        return (r * r - 1) / (2 * r ** (j + 1))

    def two_sided_limit(self, k: int) -> Number:
        """lim P(|D_n| = k) along n of k's parity, i.e. 2 pi_k."""
        return 2 * self.pi(abs(k))

    @property
    def limit_perfect_balance(self) -> Number:
        """lim over even n of P(D_n = 0) = (r-1)/r."""
        return self.two_sided_limit(0)

    @property
    def limit_imbalance_one(self) -> Number:
        """lim over odd n of P(|D_n| = 1) = (r^2-1)/r^2."""
        return self.two_sided_limit(1)


def stationary_pmf(params: DesignParams) -> StationaryDist:
    return StationaryDist(params)


def asymptotic_var(params: DesignParams, parity: str) -> Number:
    """Limit of Var(D_n) along even or odd n.

    Even limit 4r(r^2+1)/(r^2-1)^2, odd limit 8r^2/(r^2-1)^2 + 1; at p = 1
    these degenerate to 0 and 1, and at p = 1/2 the variance diverges.
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    if params.is_fair:
        raise ValueError("Var(D_n) diverges at p = 1/2; no finite limit")
    if params.is_deterministic:
        one = params.p / params.p
        return 0 * one if parity == "even" else one
    r = params.r
    denom = (r * r - 1) ** 2
    if parity == "even":
        return 4 * r * (r * r + 1) / denom
    return 8 * r * r / denom + 1


# ---------------------------------------------------------------------------
# convergence thresholds (how fast P(|D_n| = k) reaches its limit)


def _two_sided_scan(k: int, p: float, ns: Sequence[int]) -> list[float]:
    """P(|D_n| = k) for each n in ns (all of k's parity), float64.

    Evaluates the closed-form sum by the consecutive-term ratio

        term_{l+1} / term_l = q * (n+k-2l-2)/(n+k-2l)
                                * (n+k+2l)/(n+k+2l+2)
                                * ((n+k)/2 + l + 1)/(l + 1)

    which keeps every intermediate within float range and costs O(n) per
    mass instead of the O(n^2) of the factor-kernel route.  Agreement with
    pmf_at is pinned by tests.
    """
    q = 1.0 - p
    out = []
    for n in ns:
        if (n - k) % 2:
            raise ValueError(f"n={n} has the wrong parity for k={k}")
        if k > n:
            out.append(0.0)
            continue
        if k > 0:
            a = (n + k) // 2
            n_extra = (n - k) // 2
            term = q ** (k - 1)
        else:
            a = n // 2
            n_extra = n // 2 - 1
            term = 1.0
        total = term
        for l in range(n_extra):
            term *= (
                q
                * ((n + k - 2 * l - 2) / (n + k - 2 * l))
                * ((n + k + 2 * l) / (n + k + 2 * l + 2))
                * ((a + l + 1) / (l + 1))
            )
            total += term
        out.append(p ** ((n - k) // 2) * total)
    return out


def steady_state_threshold(
    k: int,
    params: DesignParams,
    tol: float,
    n_max: int = 500,
) -> int | None:
    """Smallest n of k's parity from which P(|D_n| = k) stays within a
    relative tolerance of its stationary limit 2 pi_k.

    "Stays" means the bound holds at that n and at every larger n of the
    same parity up to n_max; a single later excursion pushes the threshold
    past it.  Returns None when no such n <= n_max exists.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    start = 2 if k == 0 else k
    if n_max < start:
        raise ValueError(f"n_max={n_max} is below the first candidate n={start}")

    target = float(StationaryDist(params).two_sided_limit(k))
    ns = range(start, n_max + 1, 2)
    masses = _two_sided_scan(k, float(params.p), ns)

    last_bad = -1
    for i, mass in enumerate(masses):
        if mass == 0.0:
            ok = target == 0.0
        else:
            ok = abs(target - mass) / mass <= tol
        if not ok:
            last_bad = i
    if last_bad + 1 >= len(masses) and last_bad >= 0:
        return None
    return ns[last_bad + 1]
