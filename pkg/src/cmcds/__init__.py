"""Constant maturity CDS pricing: curve stripping, rate construction,
convexity-adjusted valuation and Monte Carlo validation."""

__version__ = "0.1.0"
