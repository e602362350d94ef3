"""Command-line front end: ``run``, ``aggregate``, ``collapse``, ``logfit``,
``msescan``, ``estimate`` and ``validate``.

Exit codes: 0 on success, 1 on a runtime failure, 2 on usage or config errors.
"""
from __future__ import annotations
import argparse
import json
import logging
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from . import plotting, storage
from .calculators import build_registry
from .ensemble import SweepSpec, aggregate_records, run_ensemble, write_outputs
from .errors import ConfigError, MptError
from .scaling import (
    EntropyDataset,
    collapse_points,
    dataset_from_records,
    dynamical_exponent,
    fit_collapse,
    log_fit_band,
    mse_scan,
    series_log_fit,
    spatial_log_fit,
)
from .settings import Settings
from .validation import oracle_equivalence

logger = logging.getLogger(__name__)


def configure_logging(verbose: int = 0) -> None:
    if verbose:
        level = logging.DEBUG if verbose > 1 else logging.INFO
    else:
        level = getattr(logging, os.getenv("MPT_LOG_LEVEL", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _diagnostics(exc: ValidationError) -> List[str]:
    return [f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]


def load_sweep_file(path: Path) -> Dict[str, Any]:
    """Read a TOML or JSON sweep file into the flat SweepSpec layout."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}", [str(exc)]) from exc
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}", [str(exc)]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}", [f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must hold a table at the top level")
    unknown = sorted(set(raw) - {"sweep", "circuit", "budget"})
    if unknown:
        raise ConfigError(f"unknown sections in {path}", [f"{name}: not one of sweep, circuit, budget" for name in unknown])
    flat: Dict[str, Any] = dict(raw.get("sweep", {}))
    if "circuit" in raw:
        flat["base_config"] = dict(raw["circuit"])
    if "budget" in raw:
        flat["budget"] = dict(raw["budget"])
    return flat


def build_sweep(args: argparse.Namespace, settings: Settings) -> SweepSpec:
    raw: Dict[str, Any] = load_sweep_file(args.config) if args.config else {}
    sweep_defaults = settings.sweep()
    raw.setdefault("runs_per_point", settings.default_runs())
    raw.setdefault("workers", settings.default_workers())
    raw.setdefault("backend", sweep_defaults.get("backend", "mps"))
    base = raw.setdefault("base_config", {})
    base.setdefault("renyi_alphas", sweep_defaults.get("renyi_alphas", [1.0, 2.0]))
    trunc = base.setdefault("truncation", {})
    trunc.setdefault("cutoff", settings.default_cutoff())
    trunc.setdefault("max_bond", settings.truncation().get("max_bond"))
    budget = raw.setdefault("budget", {})
    for key, value in settings.budget().items():
        budget.setdefault(key, value)

    overrides = {
        "n_values": args.n,
        "p_values": args.p,
        "runs_per_point": args.runs,
        "master_seed": args.seed,
        "output_dir": args.out,
        "backend": args.backend,
        "workers": args.workers,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if args.cycles is not None:
        base["time_cycles"] = args.cycles
    if args.reset:
        base["reset_after_measure"] = True
    if args.crosstalk_pd is not None:
        base["crosstalk_rate"] = args.crosstalk_pd
    if args.alphas is not None:
        base["renyi_alphas"] = args.alphas
    if args.cutoff is not None:
        trunc["cutoff"] = args.cutoff
    if args.max_bond is not None:
        trunc["max_bond"] = args.max_bond
    if args.budget_bond is not None:
        budget["max_bond"] = args.budget_bond
    if args.budget_seconds is not None:
        budget["wall_time_s"] = args.budget_seconds

    try:
        return SweepSpec.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError("invalid sweep configuration", _diagnostics(exc)) from exc


def _emit_plots(out: Path, frame: pd.DataFrame, bond_stats: pd.DataFrame) -> None:
    if frame.empty:
        return
    for alpha in sorted(frame["alpha"].unique()):
        plotting.plot_entropy_curves(frame, out / f"entropy_alpha{alpha:g}.png", alpha=float(alpha))
    plotting.plot_bond_stats(bond_stats, out / "bond_stats.png")


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    spec = build_sweep(args, settings)
    if args.dry_run:
        print(f"planned trajectories: {spec.planned_count()}")
        return 0
    result = run_ensemble(spec, progress=not args.no_progress)
    out = Path(spec.output_dir)
    if args.plots:
        _emit_plots(out, result.to_frame(), result.bond_stats_frame())
    cells = len(result.cells)
    print(f"aggregated {cells} cells into {out / storage.AGGREGATE_FILE} ({result.n_incomplete()} incomplete)")
    return 0


def cmd_aggregate(args: argparse.Namespace, settings: Settings) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        raise ConfigError(f"records file not found: {records_path}")
    out = Path(args.out) if args.out else records_path.parent
    result = aggregate_records(storage.read_records(records_path))
    write_outputs(result, out)
    if args.plots:
        _emit_plots(out, result.to_frame(), result.bond_stats_frame())
    print(f"wrote {out / storage.AGGREGATE_FILE} and {out / storage.BOND_STATS_FILE}")
    return 0


def _load_dataset(args: argparse.Namespace) -> EntropyDataset:
    if getattr(args, "records", None):
        return dataset_from_records(storage.read_records(Path(args.records)), alpha=args.alpha, cycle=args.cycle)
    if not args.aggregate:
        raise ConfigError("pass --aggregate CSV or --records JSONL")
    path = Path(args.aggregate)
    if not path.exists():
        raise ConfigError(f"aggregate file not found: {path}")
    return EntropyDataset.from_aggregate_csv(path, alpha=args.alpha, cycle=args.cycle)


def _report_dir(args: argparse.Namespace) -> Path:
    if args.out:
        return storage.init_output_dir(Path(args.out))
    source = getattr(args, "records", None) or args.aggregate
    return Path(source).parent


def _update_report(out: Path, section: str, payload: Any) -> Path:
    path = out / storage.FIT_REPORT_FILE
    report = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    report[section] = payload
    return storage.write_json(path, report)


def _parity(value: str) -> Optional[str]:
    return None if value == "all" else value


def cmd_collapse(args: argparse.Namespace, settings: Settings) -> int:
    cfg = settings.collapse()
    data = _load_dataset(args)
    parity = _parity(args.parity or cfg.get("parity", "even"))
    fit = fit_collapse(
        data,
        parity=parity,
        pc_step=cfg.get("pc_step", 0.005),
        nu_min=cfg.get("nu_min", 0.5),
        nu_max=cfg.get("nu_max", 3.0),
        nu_step=cfg.get("nu_step", 0.05),
        bootstrap=args.bootstrap if args.bootstrap is not None else int(cfg.get("bootstrap", 100)),
        seed=args.seed,
    )
    out = _report_dir(args)
    selected = data.select(parity=parity) if parity else data
    points = collapse_points(selected, fit.p_c, fit.nu)
    storage.write_table(out / "collapse_points.csv", points)
    _update_report(out, "collapse", fit.model_dump())
    if args.plots:
        plotting.plot_collapse(points, out / "collapse.png", fit.p_c, fit.nu)
    flag = "" if fit.converged else "  (not converged: nu on search boundary)"
    print(f"p_c = {fit.p_c:.4f} +/- {fit.p_c_err:.4f}, nu = {fit.nu:.3f} +/- {fit.nu_err:.3f}{flag}")
    return 0


def cmd_logfit(args: argparse.Namespace, settings: Settings) -> int:
    cfg = settings.log_fit()
    offset_form = args.offset_form or cfg.get("offset_form", "ln_2N_over_pi")
    data = _load_dataset(args)
    parity = _parity(args.parity)
    report: Dict[str, Any] = {}
    if len(args.p) == 1:
        fit = spatial_log_fit(data, args.p[0], parity, offset_form)
        report["spatial"] = fit.model_dump()
        print(f"p = {args.p[0]:g}: alpha = {fit.slope:.4f} +/- {fit.slope_err:.4f}, b = {fit.intercept:.4f} +/- {fit.intercept_err:.4f}")
    else:
        band = log_fit_band(data, args.p, parity, offset_form)
        fit = band.fits[0]
        report["band"] = band.model_dump()
        for p, f in zip(band.rates, band.fits):
            print(f"p = {p:g}: alpha = {f.slope:.4f} +/- {f.slope_err:.4f}, b = {f.intercept:.4f} +/- {f.intercept_err:.4f}")
        print(f"band: alpha = {band.mean_slope:.4f} +/- {band.slope_half_range:.4f}")
    if args.time_n is not None:
        if not args.aggregate:
            raise ConfigError("--time-n needs --aggregate (per-cycle means)")
        table = pd.read_csv(args.aggregate)
        rows = table[
            (table["N"] == args.time_n)
            & np.isclose(table["p"], args.p[0])
            & np.isclose(table["alpha"], args.alpha)
        ].sort_values("cycle")
        if rows.empty:
            raise ConfigError(f"no per-cycle rows for N={args.time_n}, p={args.p[0]}")
        temporal = series_log_fit(rows["mean_S"].to_numpy(), rows["stderr_S"].to_numpy(), 1, args.time_n)
        z, z_err = dynamical_exponent(temporal, fit)
        report["temporal"] = temporal.model_dump()
        report["z"] = {"value": z, "error": z_err}
        print(f"alpha_t = {temporal.slope:.4f} +/- {temporal.slope_err:.4f}, z = {z:.3f} +/- {z_err:.3f}")
    _update_report(_report_dir(args), "log_fit", report)
    return 0


def cmd_msescan(args: argparse.Namespace, settings: Settings) -> int:
    data = _load_dataset(args)
    scan = mse_scan(data, args.p_grid, _parity(args.parity))
    out = _report_dir(args)
    frame = pd.DataFrame(scan, columns=["p", "R"])
    storage.write_table(out / "mse_scan.csv", frame)
    best = min(scan, key=lambda item: item[1])
    _update_report(out, "mse_scan", {"parity": args.parity, "scan": scan, "argmin_p": best[0]})
    if args.plots:
        plotting.plot_mse_scan(scan, out / "mse_scan.png")
    for p, r in scan:
        print(f"{p:g}\t{r:.6g}")
    print(f"minimum at p = {best[0]:g}")
    return 0


def _calculator_args(tokens: Sequence[str]) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    it = iter(tokens)
    for token in it:
        if not token.startswith("--"):
            raise ConfigError(f"unexpected calculator argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"missing value for --{key}")
        out[key.replace("-", "_")] = value
    return out


def cmd_estimate(args: argparse.Namespace, settings: Settings, extra: Sequence[str] = ()) -> int:
    registry = build_registry()
    specs = registry.list_specs()
    if args.list or not args.calculator:
        for name, spec in specs.items():
            fields = ", ".join(spec.args_model.model_fields)
            print(f"{name}: {spec.description} [{fields}]")
        return 0
    if args.calculator not in specs:
        raise ConfigError(f"unknown calculator {args.calculator!r}", [f"available: {', '.join(specs)}"])
    try:
        parsed = registry.validate_args(args.calculator, _calculator_args(extra))
    except ValidationError as exc:
        raise ConfigError(f"invalid arguments for {args.calculator}", _diagnostics(exc)) from exc
    result = registry.execute(args.calculator, parsed)
    primary = specs[args.calculator].primary
    value = result[primary]
    print(f"{value:.12g}" if isinstance(value, float) else value)
    for key, val in result.items():
        if key != primary:
            print(f"{key} = {val:.6g}" if isinstance(val, float) else f"{key} = {val}")
    return 0


def cmd_validate(args: argparse.Namespace, settings: Settings) -> int:
    tolerance = args.tolerance if args.tolerance is not None else float(settings.oracle().get("entropy_tolerance", 1e-6))
    report = oracle_equivalence(
        n_values=args.n,
        p_values=args.p,
        runs=args.runs,
        reset_modes=(False,) if args.no_reset_variant else (False, True),
        cycles=args.cycles,
        tolerance=tolerance,
        master_seed=args.seed,
    )
    status = "PASS" if report.passed else "FAIL"
    print(
        f"{status}: {len(report.cases)} trajectories, max entropy deviation {report.max_entropy_deviation:.3g}, "
        f"{report.outcome_mismatches} outcome mismatches"
    )
    return 0 if report.passed else 1


def _analysis_inputs(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--aggregate", help="aggregate.csv from a sweep")
    sub.add_argument("--records", help="records.jsonl; keeps per-trajectory values")
    sub.add_argument("--alpha", type=float, default=1.0)
    sub.add_argument("--cycle", type=int, default=None, help="cycle to analyze (default: last)")
    sub.add_argument("--out", default=None, help="directory for reports (default: next to the input)")
    sub.add_argument("--plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpt", description="Measurement-induced phase transitions in trapped-ion circuits.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--defaults", default=None, help="alternative defaults JSON")
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="run a sweep of seeded trajectories")
    run.add_argument("--config", help="sweep file (.toml or .json)")
    run.add_argument("--n", type=int, nargs="+")
    run.add_argument("--p", type=float, nargs="+")
    run.add_argument("--cycles", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--cutoff", type=float)
    run.add_argument("--max-bond", type=int, help="truncation cap on the bond dimension")
    run.add_argument("--budget-bond", type=int, help="mark trajectories incomplete beyond this bond dimension")
    run.add_argument("--budget-seconds", type=float, help="per-trajectory wall-time budget")
    run.add_argument("--reset", action="store_true", help="reset measured ions to |0>")
    run.add_argument("--crosstalk-pd", type=float)
    run.add_argument("--alphas", type=float, nargs="+")
    run.add_argument("--backend", choices=["mps", "dense"])
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.add_argument("--dry-run", action="store_true")
    run.add_argument("--plots", action="store_true")
    run.add_argument("--no-progress", action="store_true")
    run.set_defaults(handler=cmd_run)

    agg = subs.add_parser("aggregate", help="rebuild CSV tables from records.jsonl")
    agg.add_argument("--records", required=True)
    agg.add_argument("--out")
    agg.add_argument("--plots", action="store_true")
    agg.set_defaults(handler=cmd_aggregate)

    col = subs.add_parser("collapse", help="fit p_c and nu by data collapse")
    _analysis_inputs(col)
    col.add_argument("--parity", choices=["even", "odd", "all"])
    col.add_argument("--bootstrap", type=int)
    col.add_argument("--seed", type=int, default=0)
    col.set_defaults(handler=cmd_collapse)

    lf = subs.add_parser("logfit", help="logarithmic fits in N (and t)")
    _analysis_inputs(lf)
    lf.add_argument("--p", type=float, nargs="+", required=True)
    lf.add_argument("--parity", choices=["even", "odd", "all"], default="even")
    lf.add_argument("--offset-form", choices=["ln_N", "ln_2N_over_pi"])
    lf.add_argument("--time-n", type=int, help="also fit S against ln t for this N and report z")
    lf.set_defaults(handler=cmd_logfit)

    ms = subs.add_parser("msescan", help="fit-quality scan R(p)")
    _analysis_inputs(ms)
    ms.add_argument("--parity", choices=["even", "odd", "all"], default="even")
    ms.add_argument("--p-grid", type=float, nargs="+")
    ms.set_defaults(handler=cmd_msescan)

    est = subs.add_parser("estimate", help="closed-form noise and post-selection calculators")
    est.add_argument("calculator", nargs="?")
    est.add_argument("--list", action="store_true")
    est.set_defaults(handler=cmd_estimate)

    val = subs.add_parser("validate", help="MPS against the exact state-vector oracle")
    val.add_argument("--n", type=int, nargs="+", default=[4, 6, 8, 10])
    val.add_argument("--p", type=float, nargs="+", default=[0.0, 0.1, 0.3])
    val.add_argument("--runs", type=int, default=50)
    val.add_argument("--cycles", type=int)
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--tolerance", type=float)
    val.add_argument("--no-reset-variant", action="store_true")
    val.set_defaults(handler=cmd_validate)
    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(list(argv) if argv is not None else None)
        if extra and args.command != "estimate":
            parser.error(f"unrecognized arguments: {' '.join(extra)}")
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)
    try:
        settings = Settings.load(Path(args.defaults) if args.defaults else None)
        if args.command == "estimate":
            return cmd_estimate(args, settings, extra)
        return args.handler(args, settings)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
