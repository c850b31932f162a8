"""Tenor grid, discount and survival curves, CDS quotes.

All curves live on a single tenor grid ``T_0 < T_1 < ... < T_N`` (year
offsets from the valuation date) with accrual fractions ``alpha_i`` for
``[T_{i-1}, T_i]``.  Values are observed at time 0 only.

File formats::

    grid_curve.csv   alpha,T,P,Q      (Q column optional)
    quotes.csv       maturity_years,bid_bps,ask_bps
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

BP = 1e-4

#: Printed grids carry ~5 significant figures, so alpha and the T spacing
#: disagree by up to ~1.2e-4 on real data.
DEFAULT_ALPHA_TOL = 5e-4


class MarketDataError(ValueError):
    """Invalid market data, optionally tagged with its source location."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TenorGrid:
    """Grid dates ``times[0..N]`` and accruals ``accruals[i]`` for ``[T_{i-1}, T_i]``.

    ``accruals[0]`` is a placeholder (0 in the bundled reference files).
    """

    times: np.ndarray
    accruals: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        accruals = _frozen(self.accruals)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "accruals", accruals)
        if times.ndim != 1 or times.shape != accruals.shape:
            raise MarketDataError("times and accruals must be 1-d arrays of equal length")
        if len(times) < 2:
            raise MarketDataError("tenor grid needs at least two dates")
        if times[0] < 0:
            raise MarketDataError(f"T_0 must be >= 0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise MarketDataError("grid times must be strictly increasing")
        if np.any(accruals[1:] <= 0):
            raise MarketDataError("accrual fractions alpha_i must be positive for i >= 1")

    @classmethod
    def from_times(cls, times: Sequence[float]) -> "TenorGrid":
        """Grid whose accruals are the exact date differences."""
        times = np.asarray(times, dtype=float)
        return cls(times, np.concatenate([[0.0], np.diff(times)]))

    def check_accruals(self, tol: float = DEFAULT_ALPHA_TOL) -> None:
        gap = np.abs(self.accruals[1:] - np.diff(self.times))
        if gap.size and gap.max() > tol:
            i = int(np.argmax(gap)) + 1
            raise MarketDataError(
                f"alpha_{i}={self.accruals[i]} disagrees with T_{i}-T_{i-1}="
                f"{self.times[i] - self.times[i - 1]:.6g} (tol {tol})"
            )

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TenorGrid):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.accruals, other.accruals)

    __hash__ = None

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of grid date ``t``; raises if ``t`` is not on the grid."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol:
            raise MarketDataError(f"t={t} is not a grid date")
        return k

    def check_index(self, i: int, name: str = "index") -> int:
        if not 0 <= i < len(self.times):
            raise IndexError(f"{name} {i} outside grid 0..{len(self.times) - 1}")
        return int(i)


@dataclass(frozen=True, eq=False)
class _GridCurve:
    grid: TenorGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.times.shape:
            raise MarketDataError(
                f"{type(self).__name__}: {values.size} values for a grid of {len(self.grid)} dates"
            )
        if np.any(~np.isfinite(values)) or np.any(values <= 0) or np.any(values > 1):
            raise MarketDataError(f"{type(self).__name__}: values must lie in (0, 1]")
        self._check_shape()

    def _check_shape(self):
        raise NotImplementedError

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    def _log_interp(self, t: float) -> float:
        times = self.grid.times
        if not times[0] <= t <= times[-1]:
            raise ValueError(f"t={t} outside curve span [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="left"))
        if times[k] == t:
            return float(self.values[k])
        t0, t1 = times[k - 1], times[k]
        w = (t - t0) / (t1 - t0)
        return float(math.exp((1 - w) * math.log(self.values[k - 1]) + w * math.log(self.values[k])))


class DiscountCurve(_GridCurve):
    """Default-free zero-coupon bond prices ``P(0, T_i)``."""

    def _check_shape(self):
        if np.any(np.diff(self.values) >= 0):
            k = int(np.argmax(np.diff(self.values) >= 0)) + 1
            raise MarketDataError(f"discount factors must be strictly decreasing (violated at index {k})")

    def at(self, t: float) -> float:
        """Log-linear interpolation of ``P(0, t)``."""
        return self._log_interp(t)

    def forward_libor(self, j: int) -> float:
        """Simply-compounded forward rate ``F_j(0)`` over ``[T_{j-1}, T_j]``."""
        if j < 1:
            raise IndexError("forward LIBOR needs j >= 1")
        return (self.values[j - 1] / self.values[j] - 1.0) / self.grid.accruals[j]


class SurvivalCurve(_GridCurve):
    """Risk-neutral survival probabilities ``Q(tau > T_i)``."""

    def _check_shape(self):
        if np.any(np.diff(self.values) > 0):
            k = int(np.argmax(np.diff(self.values) > 0)) + 1
            raise MarketDataError(f"survival probabilities must be non-increasing (violated at index {k})")


def survival_between(s: SurvivalCurve, t: float) -> float:
    """``Q(tau > t)`` with piecewise-constant hazard between grid dates.

    Grid dates return the stored value exactly.
    """
    return s._log_interp(t)


def defaultable_bond(d: DiscountCurve, s: SurvivalCurve, i: int) -> float:
    """``Pbar(0, T_i) = P(0, T_i) Q(tau > T_i)`` (independent rates and default)."""
    d.grid.check_index(i)
    return float(d.values[i] * s.values[i])


def defaultable_bonds(d: DiscountCurve, s: SurvivalCurve) -> np.ndarray:
    if d.grid != s.grid:
        raise MarketDataError("discount and survival curves live on different grids")
    return d.values * s.values


@dataclass(frozen=True, eq=False)
class CdsQuoteSet:
    """Spot CDS quotes ``R_{0,b}`` (stored in bps) for increasing maturities."""

    maturities: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    recovery: float = 0.4

    def __post_init__(self):
        for name in ("maturities", "bid", "ask"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (self.maturities.shape == self.bid.shape == self.ask.shape) or self.maturities.ndim != 1:
            raise MarketDataError("maturities, bid and ask must be 1-d and equally long")
        if np.any(np.diff(self.maturities) <= 0):
            raise MarketDataError("quote maturities must be strictly increasing")
        if np.any(self.bid > self.ask):
            k = int(np.argmax(self.bid > self.ask))
            raise MarketDataError(f"bid > ask at maturity {self.maturities[k]}")
        if not 0.0 <= self.recovery < 1.0:
            raise MarketDataError(f"recovery must lie in [0, 1), got {self.recovery}")

    @property
    def lgd(self) -> float:
        return 1.0 - self.recovery

    @property
    def mid(self) -> np.ndarray:
        """Mid quotes as pure rates (not bps)."""
        return 0.5 * (self.bid + self.ask) * BP

    def __len__(self):
        return len(self.maturities)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CdsQuoteSet):
            return NotImplemented
        return (
            np.array_equal(self.maturities, other.maturities)
            and np.array_equal(self.bid, other.bid)
            and np.array_equal(self.ask, other.ask)
            and self.recovery == other.recovery
        )

    __hash__ = None


@dataclass(frozen=True)
class MarketData:
    grid: TenorGrid
    discount: DiscountCurve
    survival: Optional[SurvivalCurve] = None
    quotes: Optional[CdsQuoteSet] = None


# --------------------------------------------------------------------- I/O


def _read_rows(path, header: Sequence[str], optional: Sequence[str] = ()):
    """Yield ``(line_number, {column: float})``; header checked against ``header``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            cols = [c.strip() for c in next(reader)]
        except StopIteration:
            return
        allowed = list(header) + list(optional)
        if cols[: len(header)] != list(header) or any(c not in allowed for c in cols):
            raise MarketDataError(f"expected header {','.join(allowed)}, got {','.join(cols)}", str(path), 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise MarketDataError(f"expected {len(cols)} fields, got {len(row)}", str(path), line)
            try:
                yield line, {c: float(v) for c, v in zip(cols, row)}
            except ValueError as exc:
                raise MarketDataError(f"malformed number ({exc})", str(path), line) from None


def read_grid_curve(path, alpha_tol: float = DEFAULT_ALPHA_TOL):
    """Parse a ``grid_curve.csv`` file into ``(grid, discount, survival-or-None)``."""
    rows = list(_read_rows(path, ("alpha", "T", "P"), optional=("Q",)))
    if not rows:
        raise MarketDataError("no grid rows", str(path))
    has_q = "Q" in rows[0][1]
    for (line, prev), (line2, cur) in zip(rows, rows[1:]):
        if cur["T"] <= prev["T"]:
            raise MarketDataError("T must be strictly increasing", str(path), line2)
        if cur["P"] >= prev["P"]:
            raise MarketDataError("discount factors must be strictly decreasing", str(path), line2)
        if has_q and cur["Q"] > prev["Q"]:
            raise MarketDataError("survival probabilities must be non-increasing", str(path), line2)
    for line, r in rows:
        if not 0 < r["P"] <= 1 or (has_q and not 0 < r["Q"] <= 1):
            raise MarketDataError("P and Q must lie in (0, 1]", str(path), line)
        if line != rows[0][0] and r["alpha"] <= 0:
            raise MarketDataError("alpha must be positive", str(path), line)
    grid = TenorGrid(np.array([r["T"] for _, r in rows]), np.array([r["alpha"] for _, r in rows]))
    try:
        grid.check_accruals(alpha_tol)
    except MarketDataError as exc:
        raise MarketDataError(str(exc), str(path)) from None
    discount = DiscountCurve(grid, np.array([r["P"] for _, r in rows]))
    survival = SurvivalCurve(grid, np.array([r["Q"] for _, r in rows])) if has_q else None
    return grid, discount, survival


def read_quotes(path, recovery: float = 0.4) -> Optional[CdsQuoteSet]:
    """Parse ``quotes.csv``; an empty file (or header only) yields ``None``."""
    if os.path.getsize(path) == 0:
        return None
    rows = list(_read_rows(path, ("maturity_years", "bid_bps", "ask_bps")))
    if not rows:
        return None
    for (_, prev), (line, cur) in zip(rows, rows[1:]):
        if cur["maturity_years"] <= prev["maturity_years"]:
            raise MarketDataError("maturities must be strictly increasing", str(path), line)
    for line, r in rows:
        if r["bid_bps"] > r["ask_bps"]:
            raise MarketDataError("bid above ask", str(path), line)
    return CdsQuoteSet(
        np.array([r["maturity_years"] for _, r in rows]),
        np.array([r["bid_bps"] for _, r in rows]),
        np.array([r["ask_bps"] for _, r in rows]),
        recovery=recovery,
    )


def load_market_data(
    grid_path,
    quotes_path=None,
    survival_path=None,
    *,
    recovery: float = 0.4,
    alpha_tol: float = DEFAULT_ALPHA_TOL,
) -> MarketData:
    """Load and validate the grid/curve file plus optional quotes and survival files.

    ``survival_path`` points at another ``alpha,T,P,Q`` file (e.g. the output of
    stripping); its grid and discount column must agree with ``grid_path``.
    """
    grid, discount, survival = read_grid_curve(grid_path, alpha_tol)
    if survival_path is not None:
        grid2, discount2, survival2 = read_grid_curve(survival_path, alpha_tol)
        if grid2 != grid or discount2 != discount:
            raise MarketDataError("grid mismatch with " + str(grid_path), str(survival_path))
        if survival2 is None:
            raise MarketDataError("survival file has no Q column", str(survival_path))
        survival = survival2
    quotes = read_quotes(quotes_path, recovery) if quotes_path is not None else None
    return MarketData(grid, discount, survival, quotes)


def format_number(x: float) -> str:
    """Shortest round-trip text for a float (``repr`` semantics)."""
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def write_grid_curve(path, discount: DiscountCurve, survival: Optional[SurvivalCurve] = None) -> None:
    grid = discount.grid
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("alpha,T,P,Q\n" if survival is not None else "alpha,T,P\n")
        for i in range(len(grid)):
            fields = [grid.accruals[i], grid.times[i], discount.values[i]]
            if survival is not None:
                fields.append(survival.values[i])
            fh.write(",".join(format_number(v) for v in fields) + "\n")


def write_quotes(path, quotes: CdsQuoteSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("maturity_years,bid_bps,ask_bps\n")
        for m, b, a in zip(quotes.maturities, quotes.bid, quotes.ask):
            fh.write(f"{format_number(m)},{format_number(b)},{format_number(a)}\n")
