"""
Command-line scenario runner.

    chaintransport simulate config.json [--output-dir DIR] [--quiet]
    chaintransport scan config.json
    chaintransport validate config.json

Exit codes: 0 success, 1 numerical or I/O failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .dynamics import Trajectory, build_liouvillian, evolve
from .environment import RateTableError, reverse_bias, validate_rates
from .operators import basis_state
from .transport import (
    EfficiencyTrace,
    ScanResult,
    efficiency_trace,
    excited_populations,
    scan,
    scan_point_rates,
)

__all__ = ["main", "run_scenario", "emit_csv", "SCHEMAS"]

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2

SCHEMAS = {
    "efficiency": EfficiencyTrace,
    "populations": Trajectory,
    "scan": ScanResult,
}
MANIFEST_NAME = "run_manifest.json"


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def emit_csv(result, schema: str, path) -> Path:
    """Write ``result`` as CSV under the named schema.

    ``efficiency``: time, P, E_pumped, E_unpumped, chi;
    ``populations``: time, p1..pN; ``scan``: param, chi_stationary, warnings.
    Numbers carry 12 significant digits, rows are in grid order.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown CSV schema {schema!r}; expected one of {sorted(SCHEMAS)}")
    if not isinstance(result, SCHEMAS[schema]):
        raise TypeError(f"schema {schema!r} expects {SCHEMAS[schema].__name__}, got {type(result).__name__}")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if schema == "efficiency":
            writer.writerow(["time", "P", "E_pumped", "E_unpumped", "chi"])
            for row in zip(result.times, result.pump_flux, result.extraction_flux_pumped,
                           result.extraction_flux_unpumped, result.chi):
                writer.writerow([_fmt(v) for v in row])
        elif schema == "populations":
            n = result.states.shape[1].bit_length() - 1
            writer.writerow(["time"] + [f"p{i}" for i in range(1, n + 1)])
            for t, rho in zip(result.times, result.states):
                writer.writerow([_fmt(t)] + [_fmt(p) for p in excited_populations(rho)])
        else:
            writer.writerow(["param", "chi_stationary", "warnings"])
            for v, chi, diags in zip(result.values, result.chi_stationary, result.diagnostics):
                codes = ";".join(d.split(":", 1)[0] for d in diags)
                writer.writerow([_fmt(v), _fmt(chi), codes])
    return path


def _log(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _json_float(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def _write_manifest(cfg: ScenarioConfig, out_dir: Path, command: str, rates, outputs, results) -> Path:
    manifest = {
        "artifact": "chaintransport",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict() | {"output": {"directory": str(out_dir)}},
        "rates": rates,
        "outputs": outputs,
        "results": results,
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _run_dynamic(cfg: ScenarioConfig, out_dir: Path, quiet: bool):
    rates = cfg.rates()
    rho0 = basis_state(cfg.initial_state, cfg.chain.n_atoms)
    times = cfg.times()
    if cfg.scenario == "populations":
        L = build_liouvillian(cfg.chain, rates, cfg.include_hamiltonian)
        traj = evolve(L, rho0, times)
        path = emit_csv(traj, "populations", out_dir / "populations.csv")
        pops = np.array([excited_populations(r) for r in traj.states])
        results = {"max_populations": [float(p) for p in pops.max(axis=0)]}
        return {"main": rates.to_dict()}, [path.name], results

    cases = [("forward", rates)]
    if cfg.scenario == "bias_compare":
        cases.append(("reversed", reverse_bias(rates)))
    outputs, results, resolved = [], {}, {}
    for label, r in cases:
        trace = efficiency_trace(cfg.chain, r, rho0, times, cfg.include_hamiltonian)
        name = "efficiency.csv" if cfg.scenario == "efficiency_dynamics" else f"efficiency_{label}.csv"
        outputs.append(emit_csv(trace, "efficiency", out_dir / name).name)
        key = "main" if cfg.scenario == "efficiency_dynamics" else label
        resolved[key] = r.to_dict()
        results[key] = {"chi_stationary": _json_float(trace.chi_stationary),
                        "chi_final": _json_float(float(trace.chi[-1])),
                        "converged": trace.converged}
        _log(quiet, f"{label}: chi(inf) = {trace.chi_stationary:.6g}")
    return resolved, outputs, results


def _run_scan(cfg: ScenarioConfig, out_dir: Path, quiet: bool):
    result = scan(cfg.scan_parameter, cfg.scan_values, cfg.scan_base(), workers=cfg.scan_workers)
    path = emit_csv(result, "scan", out_dir / "scan.csv")
    rates = [r.to_dict() if r is not None else None for r in result.rates]
    n_warn = int(result.warned.sum())
    _log(quiet, f"{cfg.scan_parameter}: {len(result)} points, {n_warn} with diagnostics")
    results = {"parameter": cfg.scan_parameter,
               "diagnostics": [list(d) for d in result.diagnostics]}
    return {"points": rates}, [path.name], results


def run_scenario(config_path, output_dir=None, quiet: bool = False, command: str = "simulate") -> int:
    """Run the scenario in ``config_path`` and return the process exit code."""
    try:
        cfg = load_config(config_path)
        if command == "scan" and not cfg.is_scan:
            raise ConfigError("scenario", f"{cfg.scenario!r} is not a scan scenario")
        out_dir = Path(output_dir) if output_dir is not None else cfg.output_dir
        if not cfg.is_scan:
            cfg.rates()  # surface rate-table and transform errors as config errors
    except (ConfigError, RateTableError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if cfg.is_scan:
            rates, outputs, results = _run_scan(cfg, out_dir, quiet)
        else:
            rates, outputs, results = _run_dynamic(cfg, out_dir, quiet)
        manifest = _write_manifest(cfg, out_dir, command, rates, outputs, results)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure in scenario {cfg.scenario!r}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    _log(quiet, f"wrote {', '.join(outputs)} and {manifest.name} to {out_dir}")
    return EXIT_OK


def validate_config(config_path, quiet: bool = False) -> int:
    """Dry run: schema checks plus rate diagnostics; nothing is written."""
    try:
        cfg = load_config(config_path)
        if cfg.is_scan:
            base = cfg.scan_base()
            checks = [(f"{cfg.scan_parameter}={v:g}", scan_point_rates(cfg.scan_parameter, v, base)[1])
                      for v in cfg.scan_values]
        else:
            checks = [("environment", cfg.rates())]
    except (ConfigError, RateTableError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    n_diag = 0
    for label, rates in checks:
        for d in validate_rates(rates):
            n_diag += 1
            print(f"{label}: {d}")
    _log(quiet, f"config ok ({cfg.scenario}); {n_diag} rate diagnostic(s)")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario configuration (JSON)")
    common.add_argument("--output-dir", default=None, help="override output.directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    parser = argparse.ArgumentParser(prog="chaintransport", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run any scenario")
    sub.add_parser("scan", parents=[common], help="run a parameter-scan scenario")
    sub.add_parser("validate", parents=[common], help="check a config without running it")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        return validate_config(args.config, args.quiet)
    return run_scenario(args.config, args.output_dir, args.quiet, args.command)


if __name__ == "__main__":
    sys.exit(main())
