"""
Stripping a hazard curve from CDS quotes
========================================

Bootstrap default intensities from running CDS quotes, one maturity at a
time, and see how the interpolation scheme between quote dates shapes the
survival curve.
"""

import numpy as np

from cmcds.fixtures import fiat_market
from cmcds.market import CdsQuoteSet
from cmcds.stripping import period_hazards, price_prcds, quote_indices, strip_hazard

market = fiat_market()
grid, d, quotes = market.grid, market.discount, market.quotes

# Quoted maturities are IMM-rolled: the n-year quote matures on the coupon
# date 4n + 1 quarters out, not on the exact anniversary.
idx = quote_indices(grid, quotes.maturities)
for m, k in zip(quotes.maturities, idx):
    print(f"{m:>4}y quote -> grid index {k:2d} (T = {grid.times[k]:.4f})")

# Each quote pins one unknown intensity through a one-dimensional root search.
# Two schemes for the intensity between quote dates: flat steps, or a
# continuous piecewise-linear curve.
reference = market.survival.values
for scheme in ("flat", "linear"):
    curve, surv = strip_hazard(d, grid, quotes, interpolation=scheme)
    par = [price_prcds(d, surv, 0, int(k), r, quotes.lgd) for k, r in zip(idx, quotes.mid)]
    print(f"\n{scheme:>6}: max |Q - reference| = {np.max(np.abs(surv.values - reference)):.2e}, "
          f"max |par PV| = {max(map(abs, par)):.1e}")
    print("        knot intensities:", np.round(curve.lambdas, 5))

# Both reprice every quote exactly; only the linear scheme tracks the
# reference curve between the quotes closely.  The implied quarterly
# intensities make the difference visible.
_, flat = strip_hazard(d, grid, quotes, interpolation="flat")
_, lin = strip_hazard(d, grid, quotes, interpolation="linear")
print("\nquarterly intensities, first three years")
print("  flat  :", np.round(period_hazards(flat)[1:13], 4))
print("  linear:", np.round(period_hazards(lin)[1:13], 4))

# Bumping the 5y quote by 10bp leaves the curve before the 3y quote date
# untouched and lowers survival at the 5y date.
bid, ask = quotes.bid.copy(), quotes.ask.copy()
bid[3] += 10
ask[3] += 10
bumped = CdsQuoteSet(quotes.maturities, bid, ask, quotes.recovery)
_, after = strip_hazard(d, grid, bumped)
delta = after.values - lin.values
print(f"\n5y +10bp: max |dQ| up to index {idx[2]} = {np.max(np.abs(delta[: idx[2] + 1])):.1e}, "
      f"dQ at index {idx[3]} = {delta[idx[3]]:.2e}")
