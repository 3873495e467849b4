"""Reference grids: convergence thresholds, variances, selection bias.

Three ready-made summaries over the usual bias grid p in {0.6, 0.7, 0.8,
0.9}: how fast the imbalance distribution settles into its steady state,
the exact variance of the terminal imbalance with its large-n limit, and
the experimenter's expected per-draw guessing advantage.  Each grid comes
back as a list of plain dict rows so the CLI can dump CSV or JSON without
knowing anything about the math.
"""

from __future__ import annotations

import decimal
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .bias import asymptotic_excess, selection_bias_report
from .design import DesignParams
from .exact import asymptotic_var, steady_state_threshold, var_dn
from .stable import FLOAT64_STABLE, NumericMode

__all__ = [
    "DEFAULT_P_GRID",
    "THRESHOLD_K_GRID",
    "THRESHOLD_TOL_GRID",
    "VARIANCE_EVEN_N",
    "VARIANCE_ODD_N",
    "GUESS_N_GRID",
    "round_half_even",
    "threshold_grid",
    "variance_grid",
    "selection_bias_grid",
]

DEFAULT_P_GRID = (0.6, 0.7, 0.8, 0.9)
THRESHOLD_K_GRID = (0, 1, 2, 25, 50)
THRESHOLD_TOL_GRID = (0.10, 0.05, 0.01, 0.001)
VARIANCE_EVEN_N = (10, 20, 50, 100, 200)
VARIANCE_ODD_N = (5, 15, 25, 75)
GUESS_N_GRID = (5, 10, 15, 20, 25, 50, 75, 100, 200)


def round_half_even(x: float, places: int) -> str:
    """Fixed-point decimal string with ties going to the even digit."""
    if places < 0:
        raise ValueError(f"places must be >= 0, got {places}")
    quantum = decimal.Decimal(1).scaleb(-places)
    return str(decimal.Decimal(x).quantize(quantum, rounding=decimal.ROUND_HALF_EVEN))


def _pmap(fn, items: list, threads: int) -> list:
    """Map preserving order; cells are independent so any fan-out is safe."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def threshold_grid(
    k_values: Sequence[int] = THRESHOLD_K_GRID,
    p_values: Sequence[float] = DEFAULT_P_GRID,
    tolerances: Sequence[float] = THRESHOLD_TOL_GRID,
    n_max: int = 500,
    threads: int = 1,
) -> list[dict]:
    """Smallest n at which P(|D_n| = k) has settled to its limit.

    One row per (k, p, tolerance) with the first same-parity n whose
    relative error against the limiting two-sided mass stays within the
    tolerance for good; rows that never settle by n_max carry None.
    """
    cells = [(k, p, tol) for k in k_values for p in p_values for tol in tolerances]

    def solve(cell):
        k, p, tol = cell
        n_star = steady_state_threshold(k, DesignParams(p), tol, n_max=n_max)
        return {"k": k, "p": p, "tol": tol, "n_threshold": n_star}

    return _pmap(solve, cells, threads)


def variance_grid(
    even_n: Sequence[int] = VARIANCE_EVEN_N,
    odd_n: Sequence[int] = VARIANCE_ODD_N,
    p_values: Sequence[float] = DEFAULT_P_GRID,
    mode: NumericMode | str = FLOAT64_STABLE,
    places: int = 2,
    threads: int = 1,
) -> list[dict]:
    """Var(D_n) on an even and an odd ladder of n, plus the n->inf row.

    The limit rows have n = None; `rounded` is the half-even fixed-point
    rendering used for display.
    """
    mode = NumericMode.coerce(mode)
    rows = []
    for parity, ns in (("even", even_n), ("odd", odd_n)):
        for n in ns:
            if n % 2 != (0 if parity == "even" else 1):
                raise ValueError(f"{n} is not {parity}")
        cells = [(n, p) for n in ns for p in p_values]

        def solve(cell, parity=parity):
            n, p = cell
            value = float(var_dn(n, DesignParams(p), mode))
            return {
                "parity": parity,
                "n": n,
                "p": p,
                "variance": value,
                "rounded": round_half_even(value, places),
            }

        rows.extend(_pmap(solve, cells, threads))
        for p in p_values:
            value = float(asymptotic_var(DesignParams(p), parity))
            rows.append(
                {
                    "parity": parity,
                    "n": None,
                    "p": p,
                    "variance": value,
                    "rounded": round_half_even(value, places),
                }
            )
    return rows


def selection_bias_grid(
    n_values: Sequence[int] = GUESS_N_GRID,
    p_values: Sequence[float] = DEFAULT_P_GRID,
    mode: NumericMode | str = FLOAT64_STABLE,
    places: int = 3,
    threads: int = 1,
) -> list[dict]:
    """Average per-draw excess guessing success, with the n->inf row."""
    mode = NumericMode.coerce(mode)
    cells = [(n, p) for n in n_values for p in p_values]

    def solve(cell):
        n, p = cell
        value = float(selection_bias_report(n, DesignParams(p), mode).average_excess)
        return {
            "n": n,
            "p": p,
            "average_excess": value,
            "rounded": round_half_even(value, places),
        }

    rows = _pmap(solve, cells, threads)
    for p in p_values:
        value = float(asymptotic_excess(DesignParams(p)))
        rows.append(
            {
                "n": None,
                "p": p,
                "average_excess": value,
                "rounded": round_half_even(value, places),
            }
        )
    return rows
