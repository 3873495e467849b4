"""Overflow/underflow-guarded evaluation of long products of factors.

Closed-form imbalance probabilities are sums of terms like

    (1/2) * ratio * C(a + l, l) * p^i * q^j

whose binomial part overflows double precision long before the term itself
leaves the representable range.  Writing the term as a bag of factors that
are <= 1 (the probabilities, the reciprocals from 1/l!, the leading ratio)
and a bag of factors that are > 1 (the binomial numerators a+1 .. a+l) lets
us interleave the two so the running product stays inside a fixed window:

    1. fix an overflow guard M (anything above twice the sample size works)
    2. fix an underflow guard m near the smallest positive double
    3. multiply large factors until the running product exceeds M
    4. multiply small factors until it drops below M
    5. repeat 3-4 until the large factors run out
    6. finish with the remaining small factors, largest first; if the
       product falls under m, bank the partial product and keep going

When step 6 banks partial products the value is returned as a
FactoredProduct, a list of sub-products whose true value is their product;
downstream sums rescale these instead of collapsing them to 0.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

DEFAULT_UNDERFLOW_GUARD = 1e-300

FLOAT_KIND = "float64-stable"
RATIONAL_KIND = "exact-rational"


@dataclass(frozen=True)
class NumericMode:
    """Evaluation backend: guarded float64 or exact rational arithmetic.

    overflow_guard is the window top M; None means "derive 4n from the
    problem size at the call site".  underflow_guard (m) only matters for
    the float backend.
    """

    kind: str = FLOAT_KIND
    overflow_guard: float | None = None
    underflow_guard: float = DEFAULT_UNDERFLOW_GUARD

    def __post_init__(self):
        if self.kind not in (FLOAT_KIND, RATIONAL_KIND):
            raise ValueError(f"unknown numeric mode {self.kind!r}")
        if self.overflow_guard is not None and self.overflow_guard <= 0:
            raise ValueError("overflow guard must be positive")
        if not 0 < self.underflow_guard < 1:
            raise ValueError("underflow guard must be in (0, 1)")

    @property
    def is_exact(self) -> bool:
        return self.kind == RATIONAL_KIND

    def sized_for(self, n: int) -> "NumericMode":
        """Concrete mode for a size-n computation, defaulting M to 4n."""
        if self.is_exact:
            return self
        guard = self.overflow_guard
        if guard is None:
            guard = 4.0 * max(n, 1)
        elif guard <= 2 * n:
            raise ValueError(
                f"overflow guard {guard} is too small for n={n}; need > {2 * n}"
            )
        return replace(self, overflow_guard=float(guard))

    @classmethod
    def coerce(cls, mode) -> "NumericMode":
        if isinstance(mode, cls):
            return mode
        if isinstance(mode, str):
            name = mode.strip().lower()
            if name in ("float", "float64", FLOAT_KIND):
                return FLOAT64_STABLE
            if name in ("rational", "exact", RATIONAL_KIND):
                return EXACT_RATIONAL
            raise ValueError(f"unknown numeric mode {mode!r}")
        raise TypeError(f"cannot interpret {mode!r} as a numeric mode")


FLOAT64_STABLE = NumericMode(FLOAT_KIND)
EXACT_RATIONAL = NumericMode(RATIONAL_KIND)


@dataclass(frozen=True)
class FactoredProduct:
    """A positive value below the underflow guard, kept as sub-products.

    The represented value is prod(parts).  Each part is a float in a safe
    range; the product of all of them may underflow, which is the point of
    not carrying it around collapsed.
    """

    parts: tuple[float, ...]

    @property
    def value(self) -> float:
        return math.prod(self.parts)

    def frexp(self) -> tuple[float, int]:
        """(mantissa, exponent) with value == mantissa * 2**exponent."""
        mant, exp = 1.0, 0
        for part in self.parts:
            mant *= part
            mant, e = math.frexp(mant)
            exp += e
        return mant, exp

    def __float__(self) -> float:
        return self.value


def stable_term_product(
    factors_small: Sequence[float],
    factors_large: Sequence[float],
    mode: NumericMode = FLOAT64_STABLE,
) -> float | FactoredProduct:
    """Product of all factors via the guarded interleaving above.

    factors_small must lie in (0, 1], factors_large must be >= 1.  Empty
    input is the empty product, 1.0.  Returns a FactoredProduct when the
    tail of small factors pushes the running product under the underflow
    guard.
    """
    mode = NumericMode.coerce(mode)
    if mode.is_exact:
        raise ValueError("stable_term_product is the float64 backend; "
                         "rational mode evaluates terms exactly instead")
    for f in factors_small:
        if not 0 < f <= 1:
            raise ValueError(f"small factor out of (0, 1]: {f!r}")
    for f in factors_large:
        if f < 1:
            raise ValueError(f"large factor below 1: {f!r}")

    big = mode.overflow_guard
    if big is None:
        big = 4.0 * max(len(factors_small) + len(factors_large), 4)
    tiny = mode.underflow_guard

    small = sorted(factors_small, reverse=True)
    large = list(factors_large)
    prod = 1.0
    banked: list[float] = []
    si = 0

    def absorb_small(limit: float) -> None:
        # multiply small factors until the product drops below `limit`
        nonlocal prod, si
        while prod >= limit and si < len(small):
            prod *= small[si]
            si += 1

    for f in large:
        prod *= f
        if prod > big:
            absorb_small(big)

    while si < len(small):
        # bank BEFORE a multiply that would leave the guarded range: one
        # more small factor may underflow the running product all the way
        # to zero, not just below the guard
        if prod * small[si] < tiny:
            banked.append(prod)
            prod = 1.0
        prod *= small[si]
        si += 1

    if banked:
        banked.append(prod)
        return FactoredProduct(tuple(banked))
    return prod


TermValue = float | FactoredProduct


def sum_term_values(terms: Iterable[TermValue]) -> float:
    """Sum of term values, rescaling any factored ones before adding.

    With no factored terms this is an fsum.  Otherwise every term is put on
    a common power-of-two scale so values below the underflow guard still
    contribute relative to the largest term.
    """
    plain: list[float] = []
    scaled: list[tuple[float, int]] = []
    for t in terms:
        if isinstance(t, FactoredProduct):
            scaled.append(t.frexp())
        else:
            plain.append(t)
    if not scaled:
        return math.fsum(plain)
    for v in plain:
        if v != 0.0:
            scaled.append(math.frexp(v))
    if not scaled:
        return 0.0
    top = max(exp for _, exp in scaled)
    total = math.fsum(mant * math.ldexp(1.0, exp - top) for mant, exp in scaled)
    return math.ldexp(total, top)
