"""Hazard bootstrap and forward CDS rates under independent rates and default.

With deterministic hazard, ``E[D(0,T) 1{tau>T}] = P(0,T) Q(tau>T)`` and every
forward CDS rate is a ratio of sums over grid periods.  Rate arrays are indexed
by grid index; entries without a meaning (period 0, two-period rates for
``i < 2``) hold NaN.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .market import (
    CdsQuoteSet,
    DiscountCurve,
    MarketDataError,
    SurvivalCurve,
    TenorGrid,
    defaultable_bonds,
)


class StrippingError(ArithmeticError):
    """Numerical failure while bootstrapping or inverting rates."""


class AdmissibilityWarning(UserWarning):
    pass


def _check_window(grid: TenorGrid, a: int, b: int) -> None:
    if not (0 <= a < b < len(grid)):
        raise IndexError(f"need 0 <= a < b <= {len(grid) - 1}, got a={a}, b={b}")


def _prcds(P, Q, alpha, a, b, rate, lgd):
    i = np.arange(a + 1, b + 1)
    premium = np.sum(alpha[i] * P[i] * Q[i])
    protection = np.sum(P[i] * (Q[i - 1] - Q[i]))
    return rate * premium - lgd * protection


def price_prcds(d: DiscountCurve, s: SurvivalCurve, a: int, b: int, rate: float, lgd: float) -> float:
    """Value to the protection seller of a postponed-payment running CDS on ``[T_a, T_b]``."""
    _check_window(d.grid, a, b)
    if not 0 < lgd <= 1:
        raise ValueError(f"lgd must lie in (0, 1], got {lgd}")
    return float(_prcds(d.values, s.values, d.grid.accruals, a, b, rate, lgd))


def forward_cds_rate(d: DiscountCurve, s: SurvivalCurve, a: int, b: int, lgd: float) -> float:
    """Par rate ``R_{a,b}(0)``: protection-leg value over premium annuity."""
    _check_window(d.grid, a, b)
    P, Q, alpha = d.values, s.values, d.grid.accruals
    i = np.arange(a + 1, b + 1)
    annuity = np.sum(alpha[i] * P[i] * Q[i])
    if annuity == 0:
        raise ZeroDivisionError("zero premium-leg annuity")
    return float(lgd * np.sum(P[i] * (Q[i - 1] - Q[i])) / annuity)


def spot_rates(d: DiscountCurve, s: SurvivalCurve, lgd: float) -> np.ndarray:
    """``R_{0,k}(0)`` for every ``k >= 1``."""
    out = np.full(len(d.grid), np.nan)
    for k in range(1, len(d.grid)):
        out[k] = forward_cds_rate(d, s, 0, k, lgd)
    return out


def one_period_rates_from_spot(spot: np.ndarray, pbar: np.ndarray, grid: TenorGrid) -> np.ndarray:
    """Strip ``R_k(0)`` from quoted spot rates ``R_{0,k}(0)`` by differencing annuity-weighted sums."""
    spot = np.asarray(spot, dtype=float)
    alpha = grid.accruals
    n = len(grid)
    annuity = np.concatenate([[0.0], np.cumsum(alpha[1:] * pbar[1:])])
    out = np.full(n, np.nan)
    for k in range(1, n):
        if math.isnan(spot[k]) or (k > 1 and math.isnan(spot[k - 1])):
            if not np.all(np.isnan(spot[k:])):
                raise ValueError(f"missing spot rate R_(0,{k if math.isnan(spot[k]) else k - 1})")
            break
        prev = spot[k - 1] * annuity[k - 1] if k > 1 else 0.0
        out[k] = (spot[k] * annuity[k] - prev) / (alpha[k] * pbar[k])
    return out


def one_period_rate_tilde(d: DiscountCurve, s: SurvivalCurve, k: int, lgd: float) -> float:
    """``Rtilde_k(0)`` from defaultable and default-free bonds.

    Equals ``(lgd/alpha_k)(Q_{k-1}/Q_k - 1)`` when rates and default are independent.
    """
    if not 1 <= k < len(d.grid):
        raise IndexError(f"k={k} outside 1..{len(d.grid) - 1}")
    P = d.values
    pbar = defaultable_bonds(d, s)
    alpha_k = d.grid.accruals[k]
    return float(lgd * (pbar[k - 1] * P[k] / P[k - 1] - pbar[k]) / (alpha_k * pbar[k]))


def admissible_two_period(one: np.ndarray, two: np.ndarray) -> np.ndarray:
    """Mask of ``i`` with ``R_{i-2,i}`` strictly inside ``(R_{i-1}, (R_{i-1}+R_i)/2)`` (either order)."""
    one = np.asarray(one, dtype=float)
    two = np.asarray(two, dtype=float)
    ok = np.zeros(len(two), dtype=bool)
    prev, cur, r2 = one[1:-1], one[2:], two[2:]
    mid = 0.5 * (prev + cur)
    lo, hi = np.minimum(prev, mid), np.maximum(prev, mid)
    with np.errstate(invalid="ignore"):
        ok[2:] = (r2 > lo) & (r2 < hi)
    return ok


def two_period_rates(d: DiscountCurve, s: SurvivalCurve, lgd: float) -> np.ndarray:
    """``R_{i-2,i}(0)`` for ``i >= 2``; warns where the admissibility interval fails."""
    n = len(d.grid)
    out = np.full(n, np.nan)
    for i in range(2, n):
        out[i] = forward_cds_rate(d, s, i - 2, i, lgd)
    one = np.array([np.nan] + [forward_cds_rate(d, s, k - 1, k, lgd) for k in range(1, n)])
    bad = np.flatnonzero(~admissible_two_period(one, out)[2:]) + 2
    if bad.size:
        warnings.warn(
            f"two-period rates outside the admissibility interval at i={bad.tolist()}",
            AdmissibilityWarning,
            stacklevel=2,
        )
    return out


@dataclass(frozen=True, eq=False)
class RateSet:
    """Time-0 one-period, approximated one-period and two-period CDS rates."""

    grid: TenorGrid
    one_period: np.ndarray
    one_period_tilde: np.ndarray
    two_period: Optional[np.ndarray] = None
    lgd: float = 0.6

    def __post_init__(self):
        n = len(self.grid)
        for name in ("one_period", "one_period_tilde", "two_period"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per grid date ({n})")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def admissible(self) -> np.ndarray:
        if self.two_period is None:
            raise ValueError("rate set carries no two-period rates")
        return admissible_two_period(self.one_period, self.two_period)


def build_rate_set(d: DiscountCurve, s: SurvivalCurve, lgd: float, two_period: bool = True) -> RateSet:
    n = len(d.grid)
    one = np.full(n, np.nan)
    tilde = np.full(n, np.nan)
    for k in range(1, n):
        one[k] = forward_cds_rate(d, s, k - 1, k, lgd)
        tilde[k] = one_period_rate_tilde(d, s, k, lgd)
    two = None
    if two_period:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AdmissibilityWarning)
            two = two_period_rates(d, s, lgd)
    return RateSet(d.grid, one, tilde, two, lgd)


def pbar_from_rates(rates: RateSet, base: float, anchor: int = 1, min_gap: float = 1e-14) -> np.ndarray:
    """Rebuild defaultable bonds from one- and two-period rates.

    ``Pbar_i / Pbar_{i-1} = alpha_{i-1}(R_{i-1} - R_{i-2,i}) / (alpha_i (R_{i-2,i} - R_i))``,
    applied forwards and backwards from ``Pbar_anchor = base``; defined for
    indices ``>= 1``.  Index 0 is returned as NaN.
    """
    if rates.two_period is None:
        raise ValueError("two-period rates required")
    n = len(rates.grid)
    if not 1 <= anchor < n:
        raise IndexError(f"anchor must lie in 1..{n - 1}")
    alpha = rates.grid.accruals
    R, R2 = rates.one_period, rates.two_period

    def ratio(i):
        den = R2[i] - R[i]
        if abs(den) < min_gap:
            raise StrippingError(f"R_({i - 2},{i}) equals R_{i}: Pbar ratio undefined")
        r = alpha[i - 1] * (R[i - 1] - R2[i]) / (alpha[i] * den)
        if not r > 0:
            raise StrippingError(f"non-positive Pbar ratio {r:.3g} at i={i}")
        return r

    out = np.full(n, np.nan)
    out[anchor] = base
    for i in range(anchor + 1, n):
        out[i] = out[i - 1] * ratio(i)
    for i in range(anchor, 1, -1):
        out[i - 1] = out[i] / ratio(i)
    return out


def pbar_from_tilde_rates(rates: RateSet, d: DiscountCurve, base: float, anchor: int = 0) -> np.ndarray:
    """Rebuild ``Pbar`` from ``Rtilde`` via ``Pbar_{j-1}/Pbar_j = (alpha_j Rtilde_j/lgd + 1)(1 + alpha_j F_j(0))``."""
    n = len(rates.grid)
    alpha = rates.grid.accruals
    step = np.ones(n)
    for j in range(1, n):
        step[j] = (alpha[j] * rates.one_period_tilde[j] / rates.lgd + 1.0) * (1.0 + alpha[j] * d.forward_libor(j))
    out = np.empty(n)
    out[anchor] = base
    for j in range(anchor + 1, n):
        out[j] = out[j - 1] / step[j]
    for j in range(anchor, 0, -1):
        out[j - 1] = out[j] * step[j]
    return out


# ------------------------------------------------------------------ stripping


@dataclass(frozen=True, eq=False)
class HazardCurve:
    """Deterministic hazard implied by a quote strip.

    ``kind == "flat"``: ``lambdas[m]`` is the constant intensity on
    ``(knots[m], knots[m+1]]``.  ``kind == "linear"``: ``lambdas[m]`` is the
    intensity at ``knots[m]`` with linear interpolation in between.  Both are
    held flat beyond the last knot.
    """

    knots: np.ndarray
    lambdas: np.ndarray
    kind: str = "linear"

    def intensity(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return np.interp(t, self.knots, self.lambdas)
        seg = np.clip(np.searchsorted(self.knots, t, side="left") - 1, 0, len(self.lambdas) - 1)
        return self.lambdas[seg]

    def integrated(self, times: np.ndarray) -> np.ndarray:
        """``int_{knots[0]}^{t} lambda(u) du`` at increasing ``times`` containing every knot."""
        times = np.asarray(times, dtype=float)
        if self.kind == "linear":
            lam = self.intensity(times)
            steps = 0.5 * (lam[1:] + lam[:-1]) * np.diff(times)
        else:
            steps = self.intensity(times[1:]) * np.diff(times)
        return np.concatenate([[0.0], np.cumsum(steps)])


def quote_indices(grid: TenorGrid, maturities, rule: str = "roll", frequency: int = 4) -> np.ndarray:
    """Grid indices of quoted maturities (in years).

    ``roll``: the nY contract ends ``n*frequency`` coupon dates after the first
    roll date ``T_1`` (IMM convention).  ``nearest``: closest grid date to ``n``.
    ``exact``: ``n`` must be a grid date.
    """
    out = []
    for m in np.asarray(maturities, dtype=float):
        if rule == "roll":
            k = 1 + int(round(m * frequency))
        elif rule == "nearest":
            k = int(np.argmin(np.abs(grid.times - m)))
        elif rule == "exact":
            k = grid.index_of(m, tol=1e-6)
        else:
            raise ValueError(f"unknown maturity rule {rule!r}")
        if not 1 <= k < len(grid):
            raise MarketDataError(f"quote maturity {m}y falls outside the grid")
        out.append(k)
    out = np.array(out, dtype=int)
    if np.any(np.diff(out) <= 0):
        raise MarketDataError("distinct quotes map to the same grid date")
    return out


def bisect(f, lo: float, hi: float, xtol: float = 1e-12, maxiter: int = 200) -> float:
    """Root of ``f`` on ``[lo, hi]`` by bisection; ``f(lo)`` and ``f(hi)`` must bracket."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise StrippingError(f"no root in [{lo}, {hi}] (f={flo:.3g}, {fhi:.3g})")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
        if hi - lo < xtol:
            break
    return 0.5 * (lo + hi)


def strip_hazard(
    d: DiscountCurve,
    grid: TenorGrid,
    quotes: CdsQuoteSet,
    *,
    interpolation: str = "linear",
    maturity_rule: str = "roll",
    initial_survival: float = 1.0,
    bracket: tuple = (0.0, 10.0),
    xtol: float = 1e-12,
) -> tuple:
    """Bootstrap a deterministic hazard curve from mid quotes.

    Quotes are fitted one maturity at a time: the hazard parameter of the
    newest segment is solved by bisection so the postponed-payment CDS at the
    mid quote is worth zero, with earlier segments held fixed.  Returns
    ``(HazardCurve, SurvivalCurve)`` with survival on the full grid.
    """
    if d.grid != grid:
        raise MarketDataError("discount curve is not on the supplied grid")
    if interpolation not in ("linear", "flat"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    idx = quote_indices(grid, quotes.maturities, maturity_rule)
    times, P, alpha = grid.times, d.values, grid.accruals
    lgd = quotes.lgd
    knots = [times[0]]
    lambdas = []

    def survival(curve):
        return initial_survival * np.exp(-curve.integrated(times))

    def trial(lam, k):
        if interpolation == "flat":
            return HazardCurve(np.array(knots + [times[k]]), np.array(lambdas + [lam]), "flat")
        if not lambdas:
            return HazardCurve(np.array([times[0], times[k]]), np.array([lam, lam]), "linear")
        return HazardCurve(np.array(knots + [times[k]]), np.array(lambdas + [lam]), "linear")

    for rate, k in zip(quotes.mid, idx):
        def residual(lam, k=k, rate=rate):
            Q = survival(trial(lam, k))
            return _prcds(P, Q, alpha, 0, k, rate, lgd)

        # premium minus protection falls as hazard rises
        lam = bisect(lambda x: -residual(x), *bracket, xtol=xtol)
        curve = trial(lam, k)
        knots = list(curve.knots)
        lambdas = list(curve.lambdas)

    curve = HazardCurve(np.array(knots), np.array(lambdas), interpolation)
    q = survival(curve)
    if np.any(np.diff(q) > 0):
        raise StrippingError("stripped survival curve is not monotone")
    return curve, SurvivalCurve(grid, q)


def period_hazards(s: SurvivalCurve) -> np.ndarray:
    """Average intensity over each grid period, ``ln(Q_{k-1}/Q_k) / (T_k - T_{k-1})``."""
    return np.log(s.values[:-1] / s.values[1:]) / np.diff(s.grid.times)
