"""Bundled reference data (Fiat curves and quotes, reference tables).

``CMCDS_FIXTURES`` overrides the directory the files are read from.
"""

import os
from pathlib import Path

from .market import MarketData, load_market_data

ENV_VAR = "CMCDS_FIXTURES"
_BUNDLED = Path(__file__).resolve().parent / "data" / "fiat"


def fixture_dir() -> Path:
    override = os.environ.get(ENV_VAR)
    return Path(override) if override else _BUNDLED


def fixture_path(name: str) -> Path:
    path = fixture_dir() / name
    if not path.is_file():
        raise FileNotFoundError(f"fixture {name!r} not found in {path.parent}")
    return path


def fiat_market(recovery: float = 0.4) -> MarketData:
    """Reference grid with discount and survival curves plus the CDS quotes."""
    return load_market_data(fixture_path("grid_curve.csv"), fixture_path("quotes.csv"), recovery=recovery)
