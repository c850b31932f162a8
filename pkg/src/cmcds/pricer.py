"""Constant maturity CDS valuation with the frozen-drift convexity adjustment.

A CMCDS on ``[T_a, T_b]`` pays at each ``T_j`` the ``c+1``-period CDS rate
``R_{j-1,j+c}`` fixed at ``T_{j-1}``.  Freezing the annuity weights and the
drift of the one-period rates at time 0 gives

    E^j[Rtilde_i(T_{j-1})] ~= Rtilde_i(0) exp( sum_{k=j+1}^{i} rho_{j,k}
        Rtilde_k(0)/(Rtilde_k(0) + lgd/alpha_k) int_0^{T_{j-1}} sigma_i sigma_k du ).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import TenorGrid
from .stripping import RateSet


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Lognormal volatilities and instantaneous correlations of one-period rates.

    ``sigma`` is indexed by grid index: shape ``(n,)`` for constant
    volatilities or ``(n, n)`` with ``sigma[i, p]`` the volatility of ``R_i``
    during period ``p`` (``[T_{p-1}, T_p]``).  ``rho`` is ``(n, n)``.
    ``drift_corr_index`` picks the correlation row in the drift: ``"j"``
    (measure index, as in the closed formula) or ``"i"`` (the shocked rate).
    """

    sigma: np.ndarray
    rho: np.ndarray
    lgd: float = 0.6
    drift_corr_index: str = "j"

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        rho = np.array(self.rho, dtype=float)
        n = rho.shape[0]
        if rho.shape != (n, n):
            raise ValueError("rho must be square")
        if sigma.shape not in ((n,), (n, n)):
            raise ValueError(f"sigma must have shape ({n},) or ({n}, {n}), got {sigma.shape}")
        if np.any(sigma < 0):
            raise ValueError("volatilities must be non-negative")
        if not np.allclose(rho, rho.T, atol=1e-12, rtol=0):
            raise ValueError("rho must be symmetric")
        if not np.allclose(np.diag(rho), 1.0, atol=1e-12, rtol=0) or np.any(np.abs(rho) > 1 + 1e-12):
            raise ValueError("rho must have unit diagonal and entries in [-1, 1]")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ValueError("rho is not positive semidefinite")
        if self.drift_corr_index not in ("j", "i"):
            raise ValueError("drift_corr_index must be 'j' or 'i'")
        if not 0 < self.lgd <= 1:
            raise ValueError("lgd must lie in (0, 1]")
        sigma.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def flat(cls, n: int, sigma: float, rho: float, lgd: float = 0.6, **kw) -> "ModelParams":
        """Common volatility ``sigma`` and pairwise correlation ``rho`` on ``n`` grid indices."""
        corr = np.full((n, n), float(rho))
        np.fill_diagonal(corr, 1.0)
        return cls(np.full(n, float(sigma)), corr, lgd, **kw)

    @property
    def size(self) -> int:
        return self.rho.shape[0]

    @property
    def time_varying(self) -> bool:
        return self.sigma.ndim == 2

    def vol(self, i: int, period: int) -> float:
        return float(self.sigma[i, period] if self.time_varying else self.sigma[i])

    def corr_row(self, i: int, j: int) -> int:
        return j if self.drift_corr_index == "j" else i

    def scaled(self, factor: float) -> "ModelParams":
        return ModelParams(self.sigma * factor, self.rho, self.lgd, self.drift_corr_index)


def integrated_covariance(p: ModelParams, grid: TenorGrid, i: int, k: int, upto: int) -> float:
    """``int_{T_0}^{T_upto} sigma_i(u) sigma_k(u) du`` for piecewise-constant volatilities."""
    times = grid.times
    if not p.time_varying:
        return float(p.sigma[i] * p.sigma[k] * (times[upto] - times[0]))
    dt = np.diff(times[: upto + 1])
    return float(np.sum(p.sigma[i, 1 : upto + 1] * p.sigma[k, 1 : upto + 1] * dt))


@dataclass(frozen=True)
class CmcdsSpec:
    """Protection on ``[T_a, T_b]``; each period pays the ``c+1``-period CDS rate."""

    a: int
    b: int
    c: int

    def validate(self, grid: TenorGrid, allow_zero_c: bool = False) -> None:
        if not 0 <= self.a < self.b:
            raise ValueError(f"need 0 <= a < b, got a={self.a}, b={self.b}")
        if self.c < (0 if allow_zero_c else 1):
            raise ValueError(f"c must be >= 1, got {self.c}")
        if self.b + self.c >= len(grid):
            raise IndexError(
                f"b + c = {self.b + self.c} runs past the last grid index {len(grid) - 1}"
            )


def _check_rates(rates: RateSet, p: ModelParams, last: int) -> None:
    if p.size < last + 1:
        raise ValueError(f"model parameters cover {p.size} indices, need {last + 1}")
    if np.isnan(rates.one_period_tilde[1 : last + 1]).any():
        raise ValueError(f"rates missing below index {last}")


def adjustment_exponent(rates: RateSet, p: ModelParams, i: int, j: int, grid: TenorGrid) -> float:
    """Log of the frozen-drift convexity factor for ``Rtilde_i`` paid under measure ``j``."""
    if not 1 <= j <= i < len(grid):
        raise IndexError(f"need 1 <= j <= i < {len(grid)}, got i={i}, j={j}")
    alpha = grid.accruals
    lgd = p.lgd
    row = p.corr_row(i, j)
    total = 0.0
    for k in range(j + 1, i + 1):
        rk = rates.one_period_tilde[k]
        total += p.rho[row, k] * rk / (rk + lgd / alpha[k]) * integrated_covariance(p, grid, i, k, j - 1)
    return total


def convexity_adjusted_expectation(rates: RateSet, p: ModelParams, i: int, j: int, grid: TenorGrid) -> float:
    """Frozen-drift approximation of ``E^{j-1,j}[Rtilde_i(T_{j-1})]``."""
    return float(rates.one_period_tilde[i] * np.exp(adjustment_exponent(rates, p, i, j, grid)))


def annuity_weights(pbar: np.ndarray, grid: TenorGrid, first: int, last: int) -> np.ndarray:
    """``alpha_i Pbar_i / sum_h alpha_h Pbar_h`` for ``i = first..last``."""
    ann = grid.accruals[first : last + 1] * pbar[first : last + 1]
    return ann / ann.sum()


def rate_from_one_period(rates: RateSet, pbar: np.ndarray, grid: TenorGrid, a: int, b: int) -> float:
    """``R_{a,b}(0)`` as the annuity-weighted average of one-period rates."""
    w = annuity_weights(pbar, grid, a + 1, b)
    return float(w @ rates.one_period[a + 1 : b + 1])


def _paid_rate_expectation(rates, p, spec, pbar, grid, j, with_convexity=True):
    """``sum_i wbar_i^j(0) E^j[Rtilde_i(T_{j-1})]`` for one payment date."""
    idx = range(j, j + spec.c + 1)
    w = annuity_weights(pbar, grid, j, j + spec.c)
    if with_convexity:
        vals = np.array([convexity_adjusted_expectation(rates, p, i, j, grid) for i in idx])
    else:
        vals = rates.one_period_tilde[j : j + spec.c + 1]
    return float(w @ vals)


def premium_leg(rates, p, spec, pbar, grid, with_convexity: bool = True) -> float:
    """CMCDS premium leg ``sum_j alpha_j Pbar_j sum_i wbar_i^j E^j[Rtilde_i(T_{j-1})]``."""
    spec.validate(grid, allow_zero_c=True)
    _check_rates(rates, p, spec.b + spec.c)
    alpha = grid.accruals
    return float(
        sum(
            alpha[j] * pbar[j] * _paid_rate_expectation(rates, p, spec, pbar, grid, j, with_convexity)
            for j in range(spec.a + 1, spec.b + 1)
        )
    )


def protection_leg(rates: RateSet, spec: CmcdsSpec, pbar: np.ndarray, grid: TenorGrid) -> float:
    """``sum_j alpha_j Pbar_j R_j(0)`` with ``R_j(0) = Rtilde_j(0)`` (independence)."""
    j = np.arange(spec.a + 1, spec.b + 1)
    return float(np.sum(grid.accruals[j] * pbar[j] * rates.one_period_tilde[j]))


def cmcds_pv(rates: RateSet, p: ModelParams, spec: CmcdsSpec, pbar: np.ndarray, grid: TenorGrid) -> float:
    """Value to the protection seller with the convexity-adjusted premium leg."""
    return premium_leg(rates, p, spec, pbar, grid) - protection_leg(rates, spec, pbar, grid)


def cmcds_pv_norho(rates: RateSet, spec: CmcdsSpec, pbar: np.ndarray, grid: TenorGrid) -> float:
    """Value without convexity: ``sum_j alpha_j Pbar_j (R_{j-1,j+c}(0) - R_{j-1,j}(0))``."""
    spec.validate(grid, allow_zero_c=True)
    alpha = grid.accruals
    total = 0.0
    for j in range(spec.a + 1, spec.b + 1):
        paid = rate_from_one_period(rates, pbar, grid, j - 1, j + spec.c)
        total += alpha[j] * pbar[j] * (paid - rates.one_period[j])
    return float(total)


def participation_rate(rates, p, spec, pbar, grid, with_convexity: bool = True) -> float:
    """Standard CDS premium leg over CMCDS premium leg for the same window."""
    j = np.arange(spec.a + 1, spec.b + 1)
    num = np.sum(grid.accruals[j] * pbar[j]) * rate_from_one_period(rates, pbar, grid, spec.a, spec.b)
    den = premium_leg(rates, p, spec, pbar, grid, with_convexity)
    if den == 0:
        raise ZeroDivisionError("CMCDS premium leg is zero")
    return float(num / den)


def conv_table(rates, pbar, grid, sigmas, rhos, spec: CmcdsSpec, lgd: float = 0.6) -> np.ndarray:
    """``Conv(sigma, rho)`` on a flat-parameter grid; rows follow ``sigmas``."""
    base = cmcds_pv_norho(rates, spec, pbar, grid)
    out = np.empty((len(sigmas), len(rhos)))
    for a, s in enumerate(sigmas):
        for b, r in enumerate(rhos):
            p = ModelParams.flat(len(grid), s, r, lgd)
            out[a, b] = cmcds_pv(rates, p, spec, pbar, grid) - base
    return out


def participation_table(rates, pbar, grid, sigmas, rhos, spec: CmcdsSpec, lgd: float = 0.6) -> np.ndarray:
    out = np.empty((len(sigmas), len(rhos)))
    for a, s in enumerate(sigmas):
        for b, r in enumerate(rhos):
            p = ModelParams.flat(len(grid), s, r, lgd)
            out[a, b] = participation_rate(rates, p, spec, pbar, grid)
    return out


@dataclass(frozen=True)
class MaturityRow:
    i: int
    x: float
    y: float
    z: float
    psi: float
    phi: float


def maturity_table(rates, p: ModelParams, c: int, b_max: int, pbar, grid) -> list:
    """Constant maturity versus standard rates as the final maturity ``T_i`` grows.

    ``x``/``y``: paid rate without/with convexity over ``R_{0,b_max}(0)``;
    ``z = y/x``; ``psi``/``phi``: participation rates for ``[0, T_i]``
    without/with convexity.
    """
    CmcdsSpec(0, b_max, c).validate(grid)
    _check_rates(rates, p, b_max + c)
    alpha = grid.accruals
    standard = rate_from_one_period(rates, pbar, grid, 0, b_max)
    rows = []
    plain_leg = adjusted_leg = annuity = 0.0
    for i in range(1, b_max + 1):
        spec = CmcdsSpec(0, i, c)
        paid = rate_from_one_period(rates, pbar, grid, i - 1, i + c)
        adjusted = _paid_rate_expectation(rates, p, spec, pbar, grid, i)
        annuity += alpha[i] * pbar[i]
        plain_leg += alpha[i] * pbar[i] * paid
        adjusted_leg += alpha[i] * pbar[i] * adjusted
        std_leg = annuity * rate_from_one_period(rates, pbar, grid, 0, i)
        rows.append(
            MaturityRow(
                i=i,
                x=float(paid / standard),
                y=float(adjusted / standard),
                z=float(adjusted / paid),
                psi=float(std_leg / plain_leg),
                phi=float(std_leg / adjusted_leg),
            )
        )
    return rows
