"""Regenerate the Fiat reference tables and diff them against bundled golden values."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .market import defaultable_bonds, load_market_data
from .pricer import CmcdsSpec, ModelParams, conv_table, maturity_table, participation_table
from .stripping import build_rate_set, strip_hazard

TABLES = ("survival", "conv", "participation", "maturity")

# Settings of the published reference run.
TABLE_SPEC = CmcdsSpec(0, 20, 21)
MATURITY_SIGMA = 0.4
MATURITY_RHO = 0.9
MATURITY_B_MAX = 20


@dataclass(frozen=True)
class CellDiff:
    table: str
    key: str
    computed: float
    golden: float

    @property
    def abs_dev(self) -> float:
        return abs(self.computed - self.golden)

    @property
    def rel_dev(self) -> float:
        return self.abs_dev / abs(self.golden) if self.golden != 0 else (0.0 if self.abs_dev == 0 else np.inf)


@dataclass
class Report:
    cells: list = field(default_factory=list)

    def table(self, name: str) -> list:
        return [c for c in self.cells if c.table == name]

    def tables(self) -> list:
        return list(dict.fromkeys(c.table for c in self.cells))

    def max_abs(self, name: str) -> float:
        return max(c.abs_dev for c in self.table(name))

    def max_rel(self, name: str) -> float:
        return max(c.rel_dev for c in self.table(name))

    def summary_lines(self) -> list:
        return [
            f"{name}: cells={len(self.table(name))} max_abs_dev={self.max_abs(name):.3g} "
            f"max_rel_dev={self.max_rel(name):.3g}"
            for name in self.tables()
        ]

    def flagged(self, rel_tol: float = 0.01, abs_tol: float = 0.0) -> list:
        """Cells whose deviation exceeds both ``rel_tol`` (relative) and ``abs_tol`` (absolute)."""
        return [c for c in self.cells if c.rel_dev > rel_tol and c.abs_dev > abs_tol]


def _read_golden(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def reproduce_paper(
    fixture_dir=None,
    tables: Sequence[str] = TABLES,
    *,
    maturity_c: int = 20,
    interpolation: str = "linear",
    maturity_rule: str = "roll",
) -> Report:
    """Rebuild the selected reference tables from the fixtures and compare cell by cell.

    ``survival`` strips the quotes and compares with the tabulated survival
    curve; the three pricing tables use the tabulated survival curve directly.
    """
    from .fixtures import fixture_dir as default_dir

    root = Path(fixture_dir) if fixture_dir is not None else default_dir()
    unknown = set(tables) - set(TABLES)
    if unknown:
        raise ValueError(f"unknown tables {sorted(unknown)}; choose from {TABLES}")
    needed = ["grid_curve.csv", "quotes.csv"] + [f"golden_{t}.csv" for t in tables if t != "survival"]
    for name in needed:
        if not (root / name).is_file():
            raise FileNotFoundError(f"fixture {name!r} missing in {root}")

    market = load_market_data(root / "grid_curve.csv", root / "quotes.csv")
    grid, d, s = market.grid, market.discount, market.survival
    lgd = market.quotes.lgd
    report = Report()

    if "survival" in tables:
        _, stripped = strip_hazard(d, grid, market.quotes, interpolation=interpolation, maturity_rule=maturity_rule)
        for k in range(len(grid)):
            report.cells.append(CellDiff("survival", f"T={grid.times[k]:g}", float(stripped[k]), float(s[k])))

    if not set(tables) - {"survival"}:
        return report

    rates = build_rate_set(d, s, lgd)
    pbar = defaultable_bonds(d, s)

    for name, builder, col in (("conv", conv_table, "conv"), ("participation", participation_table, "phi")):
        if name not in tables:
            continue
        golden = _read_golden(root / f"golden_{name}.csv")
        sigmas = sorted({float(r["sigma"]) for r in golden})
        rhos = sorted({float(r["rho"]) for r in golden})
        values = builder(rates, pbar, grid, sigmas, rhos, TABLE_SPEC, lgd)
        for r in golden:
            a, b = sigmas.index(float(r["sigma"])), rhos.index(float(r["rho"]))
            report.cells.append(CellDiff(name, f"sigma={r['sigma']},rho={r['rho']}", float(values[a, b]), float(r[col])))

    if "maturity" in tables:
        golden = _read_golden(root / "golden_maturity.csv")
        p = ModelParams.flat(len(grid), MATURITY_SIGMA, MATURITY_RHO, lgd)
        rows = {row.i: row for row in maturity_table(rates, p, maturity_c, MATURITY_B_MAX, pbar, grid)}
        for r in golden:
            i = int(r["i"])
            for col in ("x", "y", "z", "psi", "phi"):
                report.cells.append(CellDiff("maturity", f"i={i},{col}", float(getattr(rows[i], col)), float(r[col])))
    return report


def write_report(path, report: Report) -> None:
    from .market import format_number

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["table", "cell", "computed", "golden", "abs_dev", "rel_dev"])
        for c in report.cells:
            w.writerow([c.table, c.key] + [format_number(v) for v in (c.computed, c.golden, c.abs_dev, c.rel_dev)])
