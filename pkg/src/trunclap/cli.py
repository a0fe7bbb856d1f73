"""Command line entry point: solve, sweep, critical, period and audit.

Every option may also come from a JSON file given with ``--config`` whose
keys are the long flag names (``tol-rel`` or ``tol_rel``).  Flags given on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .builder import BuildError, build_radial, solve_minus, verify_residual
from .config import SolveConfig
from .critical import classify_r0, compute_thresholds, k1_threshold_check
from .nonlinearity import parse_nonlinearity
from .oracle import cross_check, event_scan
from .soe import (
    SoeIntegrationError,
    extremum_event,
    k1_classify,
    soe_energy_audit,
    soe_integrate,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CROSS_CHECK = 3

DEFAULTS = {
    "g": "cubic:1",
    "k": 1,
    "xi": None,
    "theta": None,
    "r0": None,
    "from_switch": False,
    "phase_plane": False,
    "tol_abs": 1e-10,
    "tol_rel": 1e-10,
    "truncation": 200.0,
    "cap": 1e6,
    "out": None,
    "cross_check": False,
    "workers": 1,
    "equation": "plus",
    "tol": 1e-2,
    "until": 50.0,
}

CSV_COLUMNS = ("r", "u", "uprime", "Au", "regime", "segment_index")


class UsageError(ValueError):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON file with flag values")
    p.add_argument("--g", default=None, help="nonlinearity: cubic:S or scaled-cubic:P:S")
    p.add_argument("--k", type=int, default=None, help="number of eigenvalues summed")
    p.add_argument("--tol-abs", type=float, default=None)
    p.add_argument("--tol-rel", type=float, default=None)
    p.add_argument("--truncation", type=float, default=None, help="largest radius integrated")
    p.add_argument("--cap", type=float, default=None, help="|u| treated as blow-up")
    p.add_argument("--out", default=None, help="output path prefix (writes .csv/.json)")
    p.add_argument("--cross-check", action="store_const", const=True, default=None,
                   help="compare against the independent oracles")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="trunclap", description="Radial solutions for the truncated Laplacian"
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="build one radial solution")
    _add_common(p)
    p.add_argument("--xi", type=float, default=None, help="u(0), or psi(r0) with --theta")
    p.add_argument("--theta", type=float, default=None,
                   help="initial slope: integrate the pure SOE from (r0, xi, theta)")
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--from-switch", action="store_const", const=True, default=None,
                   help="SOE started at the FOE->SOE switch: psi(r0)=beta")
    p.add_argument("--phase-plane", action="store_const", const=True, default=None,
                   help="add an energy column to the CSV")
    p.add_argument("--equation", choices=("plus", "minus"), default=None)

    p = sub.add_parser("sweep", help="classify a grid of xi or r0 values")
    _add_common(p)
    p.add_argument("--xi", default=None, help="min:max:count or a comma list")
    p.add_argument("--r0", default=None, help="min:max:count or a comma list (switch family)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--equation", choices=("plus", "minus"), default=None)

    p = sub.add_parser("critical", help="threshold constants as JSON")
    _add_common(p)
    p.add_argument("--tol", type=float, default=None, help="bisection bracket width")

    p = sub.add_parser("period", help="k = 1 energy, amplitude and period")
    _add_common(p)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)

    p = sub.add_parser("audit", help="energy and residual audit of one solution")
    _add_common(p)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--until", type=float, default=None, help="radius for the energy audit")
    return ap


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional JSON config file and explicit flags."""
    opts = dict(DEFAULTS)
    if args.config is not None:
        with open(args.config) as fh:
            raw = json.load(fh)
        for key, value in raw.items():
            name = key.replace("-", "_")
            if name not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            opts[name] = value
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            opts[key] = value
    opts["command"] = args.command
    if int(opts["k"]) != opts["k"] or opts["k"] < 1:
        raise UsageError(f"k must be a positive integer, got {opts['k']}")
    opts["k"] = int(opts["k"])
    return opts


def solve_config(opts: dict) -> SolveConfig:
    try:
        return SolveConfig(
            rtol=float(opts["tol_rel"]), atol=float(opts["tol_abs"]),
            cap_u=float(opts["cap"]), truncation=float(opts["truncation"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def parse_grid(spec) -> list[float]:
    """``min:max:count`` (count >= 1) or a comma separated list of values."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, list):
        return [float(x) for x in spec]
    text = str(spec).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid {spec!r} must be min:max:count")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise UsageError("grid count must be at least 1")
        return [lo] if n == 1 else [float(x) for x in np.linspace(lo, hi, n)]
    return [float(x) for x in text.split(",") if x.strip()]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.floating):
        return _jsonable(float(x))
    return x


def write_rows(path: str | None, header, rows, stream=None) -> None:
    """CSV with floats written via repr, so output is bit-reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    if path is None:
        (stream or sys.stdout).write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def emit_json(obj: dict, path: str | None) -> None:
    text = json.dumps(_jsonable(obj), indent=2)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _paths(opts: dict) -> tuple[str | None, str | None]:
    if opts["out"] is None:
        return None, None
    base = str(opts["out"])
    for ext in (".csv", ".json"):
        if base.endswith(ext):
            base = base[: -len(ext)]
    return base + ".csv", base + ".json"


def _solution_rows(solution, energy: bool, nl):
    r, u, up, Au, regime, idx = solution.samples()
    rows = []
    for i in range(len(r)):
        row = [r[i], u[i], up[i], Au[i], regime[i], int(idx[i])]
        if energy:
            row.append(0.5 * up[i] ** 2 + float(nl.potential(u[i])))
        rows.append(row)
    return rows


def _soe_rows(traj, energy: bool):
    E = traj.energy
    rows = []
    for i, (r, u, up, A) in enumerate(zip(traj.r, traj.u, traj.uprime, traj.Au)):
        row = [r, u, up, A, "SOE", 0]
        if energy:
            row.append(E[i])
        rows.append(row)
    return rows


def cmd_solve(opts: dict) -> int:
    nl = parse_nonlinearity(opts["g"])
    k = opts["k"]
    config = solve_config(opts)
    csv_path, json_path = _paths(opts)
    header = list(CSV_COLUMNS) + (["energy"] if opts["phase_plane"] else [])
    status = EXIT_OK

    if opts["from_switch"]:
        if opts["r0"] is None:
            raise UsageError("--from-switch needs --r0")
        r0 = float(opts["r0"])
        theta = -float(nl.eval(nl.beta)) * r0 / k
        traj = soe_integrate(nl, k, (r0, nl.beta, theta), (), config)
        summary = {
            "r0": r0, "k": k, "nonlinearity": nl.summary(), "xi": nl.beta,
            "theta": theta, "class": classify_r0(nl, k, r0, config),
            "status": traj.status, "r_end": traj.r_end,
        }
        rows = _soe_rows(traj, opts["phase_plane"])
    elif opts["theta"] is not None:
        if opts["xi"] is None:
            raise UsageError("--theta needs --xi")
        r0 = float(opts["r0"] or 0.0)
        xi, theta = float(opts["xi"]), float(opts["theta"])
        traj = soe_integrate(nl, k, (r0, xi, theta), (), config)
        summary = {
            "r0": r0, "xi": xi, "theta": theta, "k": k, "nonlinearity": nl.summary(),
            "status": traj.status, "r_end": traj.r_end,
        }
        if k == 1:
            out = k1_classify(nl, xi, theta)
            summary.update(kind=out.kind, E=out.E, M=out.M, T=out.T, limit=out.limit)
        rows = _soe_rows(traj, opts["phase_plane"])
    else:
        if opts["xi"] is None:
            raise UsageError("solve needs --xi, --xi with --theta, or --r0 --from-switch")
        xi = float(opts["xi"])
        try:
            if opts["equation"] == "minus":
                sol = solve_minus(nl, k, xi, config)
            else:
                sol = build_radial(nl, k, xi, config)
        except BuildError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        rep = verify_residual(sol, nl, k)
        summary = sol.summary(rep.residual_max)
        summary["branch_consistent"] = rep.consistent
        if opts["cross_check"]:
            reports = cross_check(sol, nl, k)
            summary["cross_check"] = [r.to_dict() for r in reports]
            if not all(r.passed for r in reports):
                status = EXIT_CROSS_CHECK
        rows = _solution_rows(sol, opts["phase_plane"], nl)

    if csv_path is not None:
        write_rows(csv_path, header, rows)
    emit_json(summary, json_path)
    return status


def _sweep_xi(args):
    nl_spec, k, xi, config, equation = args
    nl = parse_nonlinearity(nl_spec)
    try:
        sol = (solve_minus if equation == "minus" else build_radial)(nl, k, xi, config)
    except BuildError as exc:
        return [xi, "error", "", "", 0, "", "", "", str(exc)]
    rep = verify_residual(sol, nl, k)
    c = sol.classification
    radii = ";".join(repr(s.r) for s in sol.switches)
    return [xi, c.kind, c.limit_value, c.monotonicity, len(sol.switches), radii,
            sol.R, rep.residual_max, c.note]


def _sweep_r0(args):
    nl_spec, k, r0, config = args
    return [r0, classify_r0(parse_nonlinearity(nl_spec), k, r0, config)]


def cmd_sweep(opts: dict) -> int:
    k = opts["k"]
    parse_nonlinearity(opts["g"])
    config = solve_config(opts)
    csv_path, json_path = _paths(opts)
    if (opts["xi"] is None) == (opts["r0"] is None):
        raise UsageError("sweep needs exactly one of --xi or --r0")
    if opts["xi"] is not None:
        grid = parse_grid(opts["xi"])
        header = ["xi", "kind", "limit", "monotonicity", "switches", "switch_radii",
                  "R", "residual_max", "note"]
        tasks = [(opts["g"], k, x, config, opts["equation"]) for x in grid]
        fn = _sweep_xi
    else:
        if k < 2:
            raise UsageError("the r0 sweep classifies the switch family, which needs k >= 2")
        grid = parse_grid(opts["r0"])
        header = ["r0", "class"]
        tasks = [(opts["g"], k, x, config) for x in grid]
        fn = _sweep_r0
    workers = int(opts["workers"] or 1)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [fn(t) for t in tasks]
    write_rows(csv_path, header, rows)
    counts = Counter(row[1] for row in rows)
    summary = {"k": k, "nonlinearity": opts["g"], "points": len(rows),
               "histogram": dict(sorted(counts.items()))}
    if json_path is not None:
        emit_json(summary, json_path)
    else:
        print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def cmd_critical(opts: dict) -> int:
    nl = parse_nonlinearity(opts["g"])
    k = opts["k"]
    config = solve_config(opts)
    ts = compute_thresholds(nl, k, float(opts["tol"]), config)
    out = ts.to_dict()
    if k == 1:
        out["k1_check"] = k1_threshold_check(nl, config).to_dict()
    emit_json(out, _paths(opts)[1])
    return EXIT_OK


def cmd_period(opts: dict) -> int:
    nl = parse_nonlinearity(opts["g"])
    if opts["k"] != 1:
        raise UsageError("period is defined for k = 1 only")
    if opts["xi"] is None or opts["theta"] is None:
        raise UsageError("period needs --xi and --theta")
    xi, theta = float(opts["xi"]), float(opts["theta"])
    res = k1_classify(nl, xi, theta)
    out = {"xi": xi, "theta": theta, "kind": res.kind, "E": res.E,
           "G_alpha": float(nl.potential(nl.alpha)), "M": res.M, "T": res.T,
           "limit": res.limit, "alternatives": list(res.alternatives)}
    status = EXIT_OK
    if opts["cross_check"] and res.kind == "periodic":
        config = solve_config(opts)
        until = min(config.truncation, 6.0 * res.T)
        traj = soe_integrate(nl, 1, (0.0, xi, theta), (extremum_event(),), config, until)
        peaks = [h.r for h in traj.hits if h.name == "extremum"]
        zeros = event_scan(traj.evaluate, lambda r, u, up: u, 0.0, traj.r_end, 1e-2)
        spacing = 2.0 * float(np.mean(np.diff(peaks)))
        rel = abs(spacing - res.T) / res.T
        out["cross_check"] = {"extremum_spacing_times_two": spacing, "rel_dev": rel,
                              "zero_spacing_times_two": 2.0 * float(np.mean(np.diff(zeros)))}
        if rel > 1e-5:
            status = EXIT_CROSS_CHECK
    emit_json(out, _paths(opts)[1])
    return status


def cmd_audit(opts: dict) -> int:
    nl = parse_nonlinearity(opts["g"])
    k = opts["k"]
    config = solve_config(opts)
    if opts["xi"] is None:
        raise UsageError("audit needs --xi")
    xi = float(opts["xi"])
    theta = float(opts["theta"] or 0.0)
    until = float(opts["until"])
    traj = soe_integrate(nl, k, (0.0, xi, theta), (), config, until)
    out = {"xi": xi, "theta": theta, "k": k, "until": traj.r_end,
           "energy_audit": soe_energy_audit(traj)}
    if theta == 0.0:
        sol = build_radial(nl, k, xi, config)
        rep = verify_residual(sol, nl, k)
        out.update(residual_max=rep.residual_max, branch_consistent=rep.consistent)
    emit_json(out, _paths(opts)[1])
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "critical": cmd_critical,
    "period": cmd_period,
    "audit": cmd_audit,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        return COMMANDS[opts["command"]](opts)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SoeIntegrationError, BuildError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
