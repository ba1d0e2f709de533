"""Command-line entry point: ``uavflow <command> --scenario FILE --out DIR``.

Verdicts (unstable, infeasible) are written to the report; the exit status is
nonzero only when a command fails with an error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ctmc import stationary_distribution
from .errors import UavflowError, ValidationError
from .netmodel import Topology, validate_network
from .regions import region_minima
from .scenario import Scenario, load_scenario
from .sim import ensemble_stability, empirical_cdf, mass_balance_audit, simulate, stability_metric
from .spectral import single_queue_stationary_cdf
from .stability import (
    drift_condition_audit,
    drift_gaps,
    evaluate_certificate,
    necessary_check,
    single_queue_stability,
    sufficient_check,
)
from .throughput import max_stable_inflow, sweep

COMMANDS = ("steady-state", "check", "certify", "max-throughput", "sweep", "simulate", "stationary-dist")

log = logging.getLogger("uavflow")


def parse_grid(text: str) -> list[float]:
    """Accept ``"0..400 step 50"``, ``"0..400:50"`` or ``"0,100,200"``."""
    text = text.strip()
    m = re.fullmatch(r"(\S+)\s*\.\.\s*(\S+?)\s*(?:step\s+|:)(\S+)", text)
    if m:
        try:
            lo, hi, step = (float(x) for x in m.groups())
        except ValueError:
            raise ValidationError(f"bad grid {text!r}") from None
        if step <= 0 or hi < lo:
            raise ValidationError(f"bad grid {text!r}: need step > 0 and end >= start")
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [lo + k * step for k in range(n + 1)]
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise ValidationError(f"bad grid {text!r}") from None
    if not vals:
        raise ValidationError("empty grid")
    return vals


def _write(out: Path, name: str, text: str, artifacts: list) -> None:
    path = out / name
    path.write_text(text, encoding="utf-8")
    artifacts.append(str(path))


def _steady_state(sc, out, artifacts, opts):
    p = stationary_distribution(sc.generator)
    residual = float(np.abs(p @ sc.generator.rates).max())
    return {"p": p.tolist(), "residual": residual}


def _check(sc, out, artifacts, opts):
    p = stationary_distribution(sc.generator)
    rep = {"necessary": necessary_check(sc.network, p).to_dict()}
    if sc.network.topology is Topology.SINGLE:
        rep["single_queue_verdict"] = single_queue_stability(
            sc.network.inflows[0], sc.network.capacities[0], p
        ).value
    return rep


def _certify(sc, out, artifacts, opts):
    params, a = sc.network, sc.analysis
    p = stationary_distribution(sc.generator)
    rep = {"necessary": necessary_check(params, p).to_dict()}
    if params.topology is Topology.SINGLE:
        rep["single_queue_verdict"] = single_queue_stability(params.inflows[0], params.capacities[0], p).value
        return rep
    minima = region_minima(params, check_oracle=a.oracle_check, oracle_n_max=a.oracle_resolution)
    rep["region_minima"] = minima.to_dict()
    result = sufficient_check(params, minima, sc.generator, **a.search_options())
    rep["sufficient"] = result.to_dict()
    if result.feasible:
        rep["drift_audit"] = drift_condition_audit(result, params, minima.box, a.audit_resolution).to_dict()
    if a.reference_witness is not None:
        ref = evaluate_certificate(
            a.reference_witness.alpha, a.reference_witness.beta, drift_gaps(params, minima), sc.generator
        )
        rep["reference_witness"] = ref.to_dict()
    return rep


def _max_throughput(sc, out, artifacts, opts):
    tol = opts.get("tol") or sc.analysis.tolerance
    res = max_stable_inflow(sc.network, sc.generator, tol, sc.analysis.ray, **sc.analysis.throughput_options())
    return {"tolerance": tol, "throughput": res.to_dict()}


def _sweep(sc, out, artifacts, opts):
    axis = opts.get("axis") or sc.analysis.sweep_axis
    grid = opts.get("grid") or list(sc.analysis.sweep_grid)
    tol = opts.get("tol") or sc.analysis.tolerance
    table = sweep(
        sc.network, axis, grid, tol, sc.generator, sc.analysis.ray, **sc.analysis.throughput_options()
    )
    _write(out, "sweep.csv", table.to_csv(), artifacts)
    return {"tolerance": tol, "sweep": table.to_dict()}


def _simulate(sc, out, artifacts, opts):
    s = sc.sim
    seed = opts["seed"] if opts.get("seed") is not None else s.seed
    trajs = []
    runs = []
    for k in range(s.n_paths):
        tr = simulate(sc.network, sc.generator, sc.initial_state(), s.i0, s.horizon, s.dt, seed + k, s.record_stride)
        name = "trajectory.csv" if s.n_paths == 1 else f"trajectory_{k}.csv"
        _write(out, name, tr.to_csv(), artifacts)
        run = {
            "seed": seed + k,
            "samples": len(tr),
            "jumps": int(tr.mode_path.jump_times.size),
            "clamp_total": tr.clamp_total,
            "verdict": stability_metric(tr, s.tail_fraction).to_dict(),
        }
        if s.record_stride == 1:
            run["mass_balance_residual"] = mass_balance_audit(tr)
        runs.append(run)
        trajs.append(tr)
    rep = {"runs": runs}
    if len(trajs) > 1:
        rep["ensemble"] = ensemble_stability(trajs, s.tail_fraction).to_dict()
    return rep


def _stationary_dist(sc, out, artifacts, opts):
    params = sc.network
    if params.topology is not Topology.SINGLE:
        raise ValidationError("stationary-dist needs a single-queue scenario")
    a, c = params.inflows[0], params.capacities[0]
    cdf = single_queue_stationary_cdf(a, c, sc.generator)
    decay = float(np.min(np.abs(cdf.eigenvalues.real))) if cdf.eigenvalues.size else 1.0
    top = sc.analysis.cdf_max if sc.analysis.cdf_max is not None else 10.0 / decay
    grid = np.linspace(0.0, top, sc.analysis.cdf_points)
    F = cdf(grid)
    lines = ["q," + ",".join(f"F{j}" for j in range(params.m)) + ",total"]
    for x, row in zip(grid, F):
        lines.append(",".join(f"{v:.6g}" for v in [x, *row, row.sum()]))
    _write(out, "stationary_cdf.csv", "\n".join(lines) + "\n", artifacts)
    rep = {"spectral": cdf.to_dict(), "grid_max": top}
    s = sc.sim
    if s.empirical_paths > 0:
        seed = opts["seed"] if opts.get("seed") is not None else s.seed
        emp = empirical_cdf(params, sc.generator, grid, s.empirical_paths, s.horizon, s.burn_in, seed, s.i0)
        rep["empirical_sup_norm"] = float(np.abs(emp.values - F).max())
    return rep


HANDLERS = {
    "steady-state": _steady_state,
    "check": _check,
    "certify": _certify,
    "max-throughput": _max_throughput,
    "sweep": _sweep,
    "simulate": _simulate,
    "stationary-dist": _stationary_dist,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def run(command: str, scenario: Scenario, out_dir, seed=None, tol=None, axis=None, grid=None) -> dict:
    """Run ``command`` on ``scenario``, write ``report.json`` and any CSVs into ``out_dir``."""
    if command not in HANDLERS:
        raise ValidationError(f"unknown command {command!r}; expected one of {COMMANDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []
    opts = {"seed": seed, "tol": tol, "axis": axis, "grid": grid}
    log.info("running %s", command)
    result = HANDLERS[command](scenario, out, artifacts, opts)
    report = {
        "command": command,
        "version": __version__,
        "scenario": scenario.to_dict(),
        "overrides": {k: v for k, v in opts.items() if v is not None},
        "warnings": validate_network(scenario.network),
        "result": result,
        "artifacts": artifacts + [str(out / "report.json")],
    }
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uavflow", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("grid_words", nargs="*", help="sweep grid, e.g. 0..400 step 50")
    ap.add_argument("--scenario", required=True, help="TOML scenario file")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--tol", type=float, help="bisection tolerance [veh/hr]")
    ap.add_argument("--axis", choices=("mu", "delta_c"), help="sweep axis")
    ap.add_argument("--grid", help='sweep values: "0..400 step 50", "0..400:50" or "0,100,200"')
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_intermixed_args(argv)
    logging.basicConfig(
        level=os.environ.get("UAVFLOW_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        grid_text = args.grid if args.grid is not None else " ".join(args.grid_words)
        grid = parse_grid(grid_text) if grid_text else None
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        scenario = load_scenario(args.scenario)
        report = run(args.command, scenario, args.out, args.seed, args.tol, args.axis, grid)
    except UavflowError as exc:
        where = ""
        if getattr(exc, "line", None) is not None and f"line {exc.line}" not in str(exc):
            where = f" (line {exc.line}, column {exc.column})"
        print(f"uavflow {args.command}: {type(exc).__name__}: {exc}{where}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"uavflow {args.command}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "report": report["artifacts"][-1]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
