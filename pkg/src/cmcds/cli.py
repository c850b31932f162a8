"""Command-line front end.

Every command writes CSV artifacts plus ``manifest.json`` to ``--out``.  The
manifest records the fully resolved argument list, SHA-256 hashes of inputs
and outputs, and library versions; ``cmcds replay manifest.json`` reruns it.

Exit status: 0 success, 1 usage error, 2 invalid input data, 3 numerical
failure.  Failures print one line ``cmcds: error code=<n> kind=<kind> reason=<text>``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fixtures import ENV_VAR, fixture_dir
from .market import MarketDataError, defaultable_bonds, format_number, load_market_data, write_grid_curve
from .mc_engine import (
    AdmissibilityError,
    CholeskyError,
    DualModelParams,
    SimConfig,
    SimulationError,
    simulate_dual_family,
    validate_expectations,
)
from .pricer import (
    CmcdsSpec,
    ModelParams,
    cmcds_pv,
    cmcds_pv_norho,
    conv_table,
    maturity_table,
    participation_rate,
    participation_table,
    premium_leg,
    protection_leg,
)
from .reproduce import TABLES, reproduce_paper, write_report
from .stripping import StrippingError, build_rate_set, period_hazards, strip_hazard

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ parsing helpers


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _indices(text: str) -> list:
    """``"1,5,10"`` or ``"1-20"`` (inclusive) or a mix."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part.strip():
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected indices like '1,5,10' or '1-20', got {text!r}")
    return out


def _read_vector(path, n: int) -> np.ndarray:
    """CSV with header ``i,value``; every index ``1..n-1`` must appear."""
    out = np.zeros(n)
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "value"]:
            raise MarketDataError("expected header 'i,value'", str(path), 1)
        for line, row in enumerate(reader, start=2):
            try:
                i, v = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise MarketDataError(f"malformed row {row!r}", str(path), line)
            if not 0 <= i < n:
                raise MarketDataError(f"index {i} outside grid 0..{n - 1}", str(path), line)
            out[i] = v
            seen.add(i)
    missing = sorted(set(range(1, n)) - seen)
    if missing:
        raise MarketDataError(f"missing indices {missing[:5]}{'...' if len(missing) > 5 else ''}", str(path))
    return out


def _read_matrix(path, n: int) -> np.ndarray:
    """Headerless ``n x n`` comma-separated matrix indexed by grid index."""
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise MarketDataError(f"malformed matrix: {exc}", str(path))
    if m.shape != (n, n):
        raise MarketDataError(f"matrix must be {n}x{n}, got {m.shape[0]}x{m.shape[1]}", str(path))
    return m


def _flat_matrix(n: int, value: float, unit_diag: bool = True) -> np.ndarray:
    m = np.full((n, n), value)
    if unit_diag:
        np.fill_diagonal(m, 1.0)
    return m


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else format_number(x) for x in row])


# ------------------------------------------------------------------ shared options


def _add_market(p, quotes=True, survival=True):
    g = p.add_argument_group("market data")
    g.add_argument("--grid", help=f"alpha,T,P[,Q] curve file (default: bundled fixture; override directory with ${ENV_VAR})")
    if quotes:
        g.add_argument("--quotes", help="maturity_years,bid_bps,ask_bps quote file (default: bundled fixture)")
    if survival:
        g.add_argument("--survival", help="alpha,T,P,Q file whose Q column replaces the grid file's survival curve")
    g.add_argument("--recovery", type=float, default=0.4, help="recovery rate REC in [0, 1) (default 0.4)")
    g.add_argument("--alpha-tol", type=float, default=5e-4, help="max |alpha_i - (T_i - T_{i-1})| in years")


def _add_out(p):
    p.add_argument("--out", default=".", help="output directory (created if missing)")


def _add_window(p, c_default=21):
    g = p.add_argument_group("contract window")
    g.add_argument("--a", type=int, default=0, help="first reset index (T_a)")
    g.add_argument("--b", type=int, default=20, help="last payment index (T_b)")
    g.add_argument("--c", type=int, default=c_default, help="paid rate spans c+1 periods")


def _add_model(p):
    g = p.add_argument_group("model parameters")
    g.add_argument("--sigma", type=float, default=0.4, help="flat lognormal volatility of one-period rates")
    g.add_argument("--rho", type=float, default=0.9, help="flat pairwise correlation of one-period rates")
    g.add_argument("--sigma-file", help="per-index volatilities, CSV 'i,value' (overrides --sigma)")
    g.add_argument("--rho-file", help="headerless n x n correlation matrix (overrides --rho)")
    g.add_argument("--drift-corr-index", choices=("j", "i"), default="j",
                   help="correlation row in the drift: measure index j (default) or rate index i")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmcds", description="Constant maturity CDS pricing and validation.")
    parser.add_argument("--version", action="version", version=f"cmcds {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("strip", help="bootstrap survival probabilities from CDS quotes")
    _add_market(p, survival=False)
    p.add_argument("--interpolation", choices=("linear", "flat"), default="linear",
                   help="hazard between quote maturities: piecewise linear (default) or piecewise flat")
    p.add_argument("--maturity-rule", choices=("roll", "nearest", "exact"), default="roll",
                   help="grid index of an n-year quote: roll = 4n+1 (default), nearest date, or exact date")
    _add_out(p)

    p = sub.add_parser("rates", help="one-period, approximated one-period and two-period CDS rates")
    _add_market(p, quotes=False)
    _add_out(p)

    p = sub.add_parser("price", help="value a CMCDS with and without convexity adjustment")
    _add_market(p, quotes=False)
    _add_window(p)
    _add_model(p)
    _add_out(p)

    for name, what in (("convexity-table", "Conv(sigma, rho) table"), ("participation-table", "participation rates")):
        p = sub.add_parser(name, help=what + " on a flat (sigma, rho) grid")
        _add_market(p, quotes=False)
        _add_window(p)
        p.add_argument("--sigmas", type=_floats, default=[0.1, 0.2, 0.4, 0.6], help="comma-separated volatilities")
        p.add_argument("--rhos", type=_floats, default=[0.7, 0.8, 0.9, 0.99], help="comma-separated correlations")
        _add_out(p)

    p = sub.add_parser("maturity-table", help="constant maturity versus standard rates by final maturity")
    _add_market(p, quotes=False)
    p.add_argument("--c", type=int, default=20, help="paid rate spans c+1 periods (default 20)")
    p.add_argument("--b-max", type=int, default=20, help="largest final index; x_i is relative to R_{0,b_max}")
    _add_model(p)
    _add_out(p)

    p = sub.add_parser("mc-validate", help="Monte Carlo check of adjusted expectations")
    _add_market(p, quotes=False)
    _add_model(p)
    p.add_argument("--model", choices=("single", "dual"), default="single")
    p.add_argument("--measures", type=_indices, default=[1, 5, 10, 15, 20],
                   help="measure indices j, e.g. '1,5,10' or '1-20'")
    p.add_argument("--c", type=int, default=21, help="single: report i = j..j+c (default 21)")
    p.add_argument("--horizon", type=int, help="dual: horizon index (default j-1)")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=4, help="time steps per grid period")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--batch-size", type=int, default=10_000)
    p.add_argument("--workers", type=int, default=1, help="threads for single-family batches")
    p.add_argument("--scheme", choices=("log-euler", "euler"), default="log-euler")
    g = p.add_argument_group("dual model")
    g.add_argument("--nu", type=float, default=0.0, help="flat volatility of two-period rates")
    g.add_argument("--nu-file", help="per-index two-period volatilities, CSV 'i,value'")
    g.add_argument("--eta", type=float, default=0.9, help="flat correlation among two-period shocks")
    g.add_argument("--eta-file", help="headerless n x n matrix")
    g.add_argument("--theta", type=float, default=0.0, help="flat cross-correlation one-/two-period shocks")
    g.add_argument("--theta-file", help="headerless n x n matrix, theta[a, b] = corr(Z_a, V_b)")
    g.add_argument("--policy", choices=("reject", "absorb"), default="reject", help="admissibility breach handling")
    g.add_argument("--max-breach-rate", type=float, default=0.05)
    _add_out(p)

    p = sub.add_parser("reproduce", help="rebuild the Fiat reference tables and diff against golden values")
    p.add_argument("--fixtures", help=f"fixture directory (default: ${ENV_VAR} or the bundled set)")
    p.add_argument("--table", action="append", choices=TABLES + ("all",),
                   help="table to rebuild (repeatable; default all)")
    p.add_argument("--maturity-c", type=int, default=20, help="c for the maturity table (default 20)")
    p.add_argument("--rel-tol", type=float, default=0.01, help="relative deviation flagged in the summary")
    _add_out(p)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's directory)")
    return parser


# ------------------------------------------------------------------ commands


def _market(args, need_survival=True):
    if not 0.0 <= args.recovery < 1.0:
        raise MarketDataError(f"recovery must lie in [0, 1), got {args.recovery}")
    root = fixture_dir()
    grid_path = args.grid or root / "grid_curve.csv"
    quotes_path = getattr(args, "quotes", None)
    if quotes_path is None and hasattr(args, "quotes"):
        quotes_path = root / "quotes.csv"
    if not Path(grid_path).is_file():
        raise MarketDataError("file not found", str(grid_path))
    md = load_market_data(grid_path, quotes_path, getattr(args, "survival", None),
                          recovery=args.recovery, alpha_tol=args.alpha_tol)
    if need_survival and md.survival is None:
        raise MarketDataError("no survival curve: add a Q column or pass --survival", str(grid_path))
    inputs = [grid_path] + [x for x in (quotes_path, getattr(args, "survival", None)) if x is not None]
    return md, inputs


def _model(args, n: int, lgd: float) -> ModelParams:
    sigma = _read_vector(args.sigma_file, n) if args.sigma_file else np.full(n, args.sigma)
    rho = _read_matrix(args.rho_file, n) if args.rho_file else _flat_matrix(n, args.rho)
    return ModelParams(sigma, rho, lgd, args.drift_corr_index)


def _model_inputs(args):
    return [x for x in (getattr(args, k, None) for k in ("sigma_file", "rho_file", "nu_file", "eta_file", "theta_file")) if x]


def cmd_strip(args, out: Path):
    md, inputs = _market(args, need_survival=False)
    if md.quotes is None:
        raise MarketDataError("quote file is empty", str(args.quotes))
    _, surv = strip_hazard(md.discount, md.grid, md.quotes, interpolation=args.interpolation,
                           maturity_rule=args.maturity_rule)
    write_grid_curve(out / "survival.csv", md.discount, surv)
    t = md.grid.times
    lam = period_hazards(surv)
    _write_csv(out / "hazard.csv", ["T_start", "T_end", "lambda"], zip(t[:-1], t[1:], lam))
    return inputs, ["survival.csv", "hazard.csv"]


def cmd_rates(args, out: Path):
    md, inputs = _market(args)
    r = build_rate_set(md.discount, md.survival, 1.0 - args.recovery)
    g = md.grid
    rows = [(str(i), g.times[i], g.accruals[i], r.one_period[i], r.one_period_tilde[i], r.two_period[i])
            for i in range(1, len(g))]
    rows = [[x if not (isinstance(x, float) and np.isnan(x)) else "" for x in row] for row in rows]
    _write_csv(out / "rates.csv", ["i", "T", "alpha", "R_one", "R_tilde", "R_two"], rows)
    return inputs, ["rates.csv"]


def _pricing_setup(args):
    md, inputs = _market(args)
    lgd = 1.0 - args.recovery
    rates = build_rate_set(md.discount, md.survival, lgd)
    pbar = defaultable_bonds(md.discount, md.survival)
    return md, inputs, lgd, rates, pbar


def cmd_price(args, out: Path):
    md, inputs, lgd, rates, pbar = _pricing_setup(args)
    spec = CmcdsSpec(args.a, args.b, args.c)
    spec.validate(md.grid, allow_zero_c=True)
    p = _model(args, len(md.grid), lgd)
    row = [
        str(args.a), str(args.b), str(args.c),
        premium_leg(rates, p, spec, pbar, md.grid),
        premium_leg(rates, p, spec, pbar, md.grid, with_convexity=False),
        protection_leg(rates, spec, pbar, md.grid),
        cmcds_pv(rates, p, spec, pbar, md.grid),
        cmcds_pv_norho(rates, spec, pbar, md.grid),
        participation_rate(rates, p, spec, pbar, md.grid),
    ]
    _write_csv(out / "price.csv",
               ["a", "b", "c", "premium_leg", "premium_leg_norho", "protection_leg", "pv", "pv_norho", "participation"],
               [row])
    return inputs + _model_inputs(args), ["price.csv"]


def _table(args, out: Path, builder, name, col):
    md, inputs, lgd, rates, pbar = _pricing_setup(args)
    spec = CmcdsSpec(args.a, args.b, args.c)
    spec.validate(md.grid)
    vals = builder(rates, pbar, md.grid, args.sigmas, args.rhos, spec, lgd)
    rows = [(s, r, vals[a, b]) for a, s in enumerate(args.sigmas) for b, r in enumerate(args.rhos)]
    _write_csv(out / name, ["sigma", "rho", col], rows)
    return inputs, [name]


def cmd_convexity_table(args, out):
    return _table(args, out, conv_table, "conv.csv", "conv")


def cmd_participation_table(args, out):
    return _table(args, out, participation_table, "participation.csv", "phi")


def cmd_maturity_table(args, out: Path):
    md, inputs, lgd, rates, pbar = _pricing_setup(args)
    p = _model(args, len(md.grid), lgd)
    rows = maturity_table(rates, p, args.c, args.b_max, pbar, md.grid)
    _write_csv(out / "maturity.csv", ["i", "x", "y", "z", "psi", "phi"],
               [(str(r.i), r.x, r.y, r.z, r.psi, r.phi) for r in rows])
    return inputs + _model_inputs(args), ["maturity.csv"]


def cmd_mc_validate(args, out: Path):
    md, inputs, lgd, rates, pbar = _pricing_setup(args)
    g = md.grid
    n = len(g)
    p = _model(args, n, lgd)
    header = ["j", "i", "formula_value", "mc_mean", "mc_se", "z_score"]
    rows = []
    if args.model == "single":
        cfg = SimConfig(measure=min(args.measures), paths=args.paths, steps_per_period=args.steps, seed=args.seed,
                        scheme=args.scheme, batch_size=args.batch_size, workers=args.workers)
        for r in validate_expectations(rates, p, g, args.measures, args.c, cfg):
            rows.append((str(r.j), str(r.i), r.formula_value, r.mc_mean, r.mc_se, r.z_score))
    else:
        nu = _read_vector(args.nu_file, n) if args.nu_file else np.full(n, args.nu)
        eta = _read_matrix(args.eta_file, n) if args.eta_file else _flat_matrix(n, args.eta)
        theta = _read_matrix(args.theta_file, n) if args.theta_file else _flat_matrix(n, args.theta, unit_diag=False)
        dp = DualModelParams(p.sigma if not p.time_varying else p.sigma[:, 1], nu, p.rho, eta, theta)
        for j in args.measures:
            cfg = SimConfig(measure=j, paths=args.paths, steps_per_period=args.steps, seed=args.seed,
                            batch_size=args.batch_size)
            res = simulate_dual_family(rates, dp, cfg, g, args.horizon, policy=args.policy,
                                       max_breach_rate=args.max_breach_rate)
            # reference value: the time-0 rate (exact for the rate paired with the measure)
            for k, i in enumerate(res.r_indices):
                f0 = rates.one_period[i]
                se = res.se_R[k]
                z = (res.mean_R[k] - f0) / se if se > 0 else 0.0
                rows.append((str(j), str(int(i)), f0, res.mean_R[k], se, z))
    _write_csv(out / "mc_validate.csv", header, rows)
    return inputs + _model_inputs(args), ["mc_validate.csv"]


def cmd_reproduce(args, out: Path):
    tables = TABLES if not args.table or "all" in args.table else tuple(dict.fromkeys(args.table))
    report = reproduce_paper(args.fixtures, tables, maturity_c=args.maturity_c)
    write_report(out / "reproduce_report.csv", report)
    for line in report.summary_lines():
        print(line)
    flagged = report.flagged(args.rel_tol)
    print(f"flagged cells (rel_dev > {args.rel_tol:g}): {len(flagged)}")
    root = Path(args.fixtures) if args.fixtures else fixture_dir()
    inputs = sorted(str(x) for x in root.glob("*.csv"))
    return inputs, ["reproduce_report.csv"]


COMMANDS = {
    "strip": cmd_strip,
    "rates": cmd_rates,
    "price": cmd_price,
    "convexity-table": cmd_convexity_table,
    "participation-table": cmd_participation_table,
    "maturity-table": cmd_maturity_table,
    "mc-validate": cmd_mc_validate,
    "reproduce": cmd_reproduce,
}


# ------------------------------------------------------------------ manifest


def _versions() -> dict:
    import numba

    return {"cmcds": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _resolved_argv(parser, args) -> list:
    """Explicit argument list reproducing ``args`` (defaults spelled out, paths absolute)."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    argv = [args.command]
    for action in sub._actions:
        if not action.option_strings or action.dest in ("help", "out"):
            continue
        value = getattr(args, action.dest, None)
        if value is None:
            continue
        flag = action.option_strings[-1]
        if action.dest in ("grid", "quotes", "survival", "fixtures") or action.dest.endswith("_file"):
            value = str(Path(value).resolve())
        if isinstance(value, list):
            if action.dest == "table":
                for v in value:
                    argv += [flag, v]
                continue
            value = ",".join(format_number(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = format_number(value)
        argv += [flag, str(value)]
    return argv


def _hash_inputs(inputs):
    return {str(Path(p).resolve()): _sha256(p) for p in inputs if p is not None}


def _run(parser, argv, out_override=None) -> int:
    args = parser.parse_args(argv)
    if args.command == "replay":
        return _replay(parser, args)
    out = Path(out_override or args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs, outputs = COMMANDS[args.command](args, out)
    manifest = {
        "command": args.command,
        "argv": _resolved_argv(parser, args),
        "inputs": _hash_inputs(inputs),
        "outputs": {name: _sha256(out / name) for name in outputs},
        "versions": _versions(),
    }
    with open(out / "manifest.json", "w", newline="", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _replay(parser, args) -> int:
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise MarketDataError(f"unreadable manifest: {exc}", str(path))
    for p, digest in manifest.get("inputs", {}).items():
        if not Path(p).is_file():
            raise MarketDataError("input recorded in manifest is missing", p)
        if _sha256(p) != digest:
            raise MarketDataError("input changed since the manifest was written (sha256 mismatch)", p)
    out = Path(args.out) if args.out else path.parent
    if argv and argv[0] == "replay":
        raise UsageError("a manifest cannot replay another replay")
    _run(parser, argv + ["--out", str(out)])
    fresh = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    mismatched = [k for k, v in manifest.get("outputs", {}).items() if fresh["outputs"].get(k) != v]
    if mismatched:
        raise SimulationError(f"replayed outputs differ from the manifest: {', '.join(mismatched)}")
    print(f"replay ok: {len(manifest.get('outputs', {}))} outputs identical")
    return 0


def _fail(code: int, kind: str, exc) -> int:
    reason = " ".join(str(exc).split()) or type(exc).__name__
    print(f"cmcds: error code={code} kind={kind} reason={reason}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _run(parser, argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except (StrippingError, CholeskyError, SimulationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    except (MarketDataError, AdmissibilityError, FileNotFoundError, ValueError, IndexError, OSError) as exc:
        return _fail(EXIT_DATA, "data", exc)


if __name__ == "__main__":
    sys.exit(main())
