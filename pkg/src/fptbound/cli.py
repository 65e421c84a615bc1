"""Command-line front end: ``fptbound <command> MODEL [options]``.

Exit codes: 0 success, 1 input error, 3 when a solve stopped short of
Optimal (the best available bounds are still printed).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import model as mdl
from .constraints import FptSystem, constraint_set, format_generator
from .model import FptQuery, ModelError, Objective, load, validate
from .sdp import MAXIMIZE, MINIMIZE, assemble
from .solver import (
    BoundResult,
    LoweringInfeasible,
    Status,
    bound,
    export_sdpa,
    lift,
    lower_to_standard,
    parse_sdpa_solution,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PARTIAL = 3


class InputError(Exception):
    pass


def workers() -> int:
    raw = os.environ.get("FPTBOUND_THREADS")
    try:
        return max(1, int(raw)) if raw else (os.cpu_count() or 1)
    except ValueError:
        return 1


# -- argument parsing -----------------------------------------------------------

_THRESHOLD = re.compile(r"^\s*([A-Za-z_]\w*)\s*>=\s*(\d+)\s*$")


def _threshold(text: str) -> tuple[str, int]:
    m = _THRESHOLD.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected NAME>=H, got {text!r}")
    return m.group(1), int(m.group(2))


def _horizon(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("horizon must be positive")
    return v


def _scale(text: str) -> tuple[str, float]:
    name, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return name.strip(), float(val)


def _grid(text: str) -> list[float]:
    """``a:b:n`` (n evenly spaced points) or a comma list."""
    if ":" in text:
        a, b, n = text.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(n))]
    return [float(v) for v in text.split(",") if v.strip()]


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--format", choices=("text", "json", "csv"), default=d("text"), help="output format")
    p.add_argument("--seed", type=int, default=d(0), help="seed for simulations (pilot scales, SSA)")
    p.add_argument("--gap-tol", type=float, default=d(1e-8), help="relative duality gap tolerance")
    p.add_argument("--feas-tol", type=float, default=d(1e-8), help="feasibility tolerance")
    p.add_argument("--max-iter", type=int, default=d(200), help="interior-point iteration cap")
    p.add_argument("--no-scale", action="store_true", default=d(False), help="solve the unscaled problem")
    p.add_argument("--no-reduce", action="store_true", default=d(False), help="keep species irrelevant to the thresholds")
    p.add_argument("--solver", choices=("embedded", "export"), default=d("embedded"))


def _query_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", help="model file (.pctmc)")
    p.add_argument("--threshold", "-H", type=_threshold, action="append", help="NAME>=H (repeatable, replaces the file's)")
    p.add_argument("--horizon", "-T", type=_horizon, help="time horizon (number or inf)")
    p.add_argument("--order", "-r", type=int, help="relaxation order")
    p.add_argument("--objective", choices=[o.value for o in Objective])
    p.add_argument("--timescale", type=float, help="time scale for moment scaling")
    p.add_argument("--scale", type=_scale, action="append", help="NAME=VALUE scale bound for an unbounded species")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fptbound", description="First passage time bounds for population CTMCs", allow_abbrev=False)
    _global_options(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    parent = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    _global_options(parent, suppress=True)

    c = sub.add_parser("check", parents=[parent], allow_abbrev=False, help="parse and validate a model")
    _query_options(c)

    c = sub.add_parser("moments", parents=[parent], allow_abbrev=False, help="print moment equations and constraints")
    _query_options(c)
    c.add_argument("--m", action="append", help="population exponents, e.g. 1,0 or M^2*D (repeatable)")
    c.add_argument("--mode", help="mode assignment: bits like 10 or names of the active mode species")
    c.add_argument("--constraints", action="store_true", help="also list the generated constraints")

    c = sub.add_parser("bound", parents=[parent], allow_abbrev=False, help="lower and upper bound on the objective")
    _query_options(c)
    c.add_argument("--export-dir", default=".", help="where --solver export writes and reads files")

    c = sub.add_parser("cdf", parents=[parent], allow_abbrev=False, help="hit-probability bounds over a horizon grid")
    _query_options(c)
    c.add_argument("--grid", type=_grid, required=True, help="a:b:n or comma list of horizons")
    c.add_argument("--ssa", type=int, default=0, help="also estimate the CDF from this many trajectories")

    c = sub.add_parser("table", parents=[parent], allow_abbrev=False, help="bounds for r = 1..rmax and interval widths")
    _query_options(c)
    c.add_argument("--rmax", type=int, default=4)

    c = sub.add_parser("simulate", parents=[parent], allow_abbrev=False, help="stochastic simulation of the first passage time")
    _query_options(c)
    c.add_argument("--n", type=int, default=10000)
    c.add_argument("--confidence", type=float, default=0.99)
    c.add_argument("--csv", help="write per-trajectory samples to this file")
    c.add_argument("--backend", choices=("numba", "numpy"))

    c = sub.add_parser("export-sdpa", parents=[parent], allow_abbrev=False, help="write the relaxation in SDPA sparse format")
    _query_options(c)
    c.add_argument("--sense", choices=(MINIMIZE, MAXIMIZE), default=MINIMIZE)
    c.add_argument("--output", "-o", help="output file (default stdout)")
    return p


DATA = Path(__file__).parent / "data"


def model_path(name: str) -> Path:
    """A file path, or the name of a bundled case study (e.g. ``model1_dimerization``)."""
    p = Path(name)
    if p.exists():
        return p
    bundled = DATA / (p.name if p.suffix == ".pctmc" else p.name + ".pctmc")
    return bundled if bundled.exists() else p


def resolve(args) -> tuple[mdl.Pctmc, FptQuery]:
    try:
        model, query = load(model_path(args.model))
    except OSError as exc:
        raise InputError(f"cannot read {args.model}: {exc}") from None
    changes = {}
    if args.threshold:
        changes["thresholds"] = tuple(args.threshold)
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.order is not None:
        changes["order"] = args.order
    if args.objective is not None:
        changes["objective"] = Objective(args.objective)
    if args.timescale is not None:
        changes["time_scale_hint"] = args.timescale
    if args.scale:
        changes["scale_bounds"] = tuple(args.scale)
    if query is None:
        if "thresholds" not in changes:
            raise InputError("the model has no query block; pass --threshold NAME>=H")
        query = FptQuery(**changes)
    elif changes:
        query = query.with_(**changes)
    errors = [d for d in validate(model, query, scaling=not args.no_scale) if d.severity == "error"]
    if errors:
        raise InputError("\n".join(str(d) for d in errors))
    return model, query


# -- output helpers ----------------------------------------------------------------


def _emit(args, payload: dict, rows: list[dict] | None, text: str, out) -> None:
    if args.format == "json":
        json.dump(payload, out, indent=2, sort_keys=True)
        out.write("\n")
    elif args.format == "csv" and rows is not None:
        w = csv.DictWriter(out, fieldnames=list(rows[0]) if rows else [])
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    else:
        out.write(text if text.endswith("\n") else text + "\n")


def _num(v) -> str:
    if v is None:
        return "-"
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _solve_opts(args) -> dict:
    return dict(
        gap_tol=args.gap_tol,
        feas_tol=args.feas_tol,
        max_iter=args.max_iter,
        scale=not args.no_scale,
        reduce=not args.no_reduce,
        seed=args.seed,
    )


# -- commands -------------------------------------------------------------------


def cmd_check(args, out) -> int:
    model, query = resolve(args)
    system = FptSystem(model, query, reduce=not args.no_reduce)
    warnings = [d.message for d in validate(model, query, scaling=not args.no_scale) if d.severity != "error"]
    info = {
        "species": model.names,
        "reactions": len(model.reactions),
        "kept_species": [model.species[i].name for i in system.kept],
        "population": system.pop_names,
        "modes": [list(y) for y in system.modes if y is not None],
        "thresholds": [list(t) for t in query.thresholds],
        "horizon": float(query.horizon),
        "objective": query.objective.value,
        "order": query.order,
        "delta": system.delta,
        "warnings": warnings,
    }
    lines = [
        f"model {model.name}: {len(model.species)} species, {len(model.reactions)} reactions",
        f"query: {mdl.serialize_query(query).strip()}",
        f"species after reduction: {', '.join(info['kept_species'])}",
        f"propensity degree excess: {system.delta}",
    ]
    if info["modes"]:
        lines.append("reachable modes: " + " ".join("".join(map(str, y)) for y in info["modes"]))
    lines += [f"warning: {w}" for w in warnings]
    lines.append("ok")
    _emit(args, info, None, "\n".join(lines), out)
    return EXIT_OK


def _parse_exps(text: str, names: list[str]) -> tuple[int, ...]:
    text = text.strip()
    if re.fullmatch(r"\d+(\s*,\s*\d+)*", text):
        exps = tuple(int(v) for v in text.split(","))
        if len(exps) != len(names):
            raise InputError(f"exponent {text} needs {len(names)} entries ({', '.join(names)})")
        return exps
    exps = [0] * len(names)
    if text in ("1", ""):
        return tuple(exps)
    for factor in text.split("*"):
        name, _, power = factor.strip().partition("^")
        if name not in names:
            raise InputError(f"unknown population species {name!r} (have {', '.join(names)})")
        exps[names.index(name)] += int(power) if power else 1
    return tuple(exps)


def _parse_mode(text: str | None, system: FptSystem):
    if not system.hybrid:
        if text:
            raise InputError("the model has no mode species")
        return None
    names = [system.model.species[i].name for i in system.mode_idx]
    if text is None:
        return system.x0_mode
    if re.fullmatch(r"[01]+", text) and len(text) == len(names):
        return tuple(int(c) for c in text)
    active = {t.strip() for t in text.split(",")}
    unknown = active - set(names)
    if unknown:
        raise InputError(f"unknown mode species {', '.join(sorted(unknown))}")
    return tuple(int(n in active) for n in names)


def cmd_moments(args, out) -> int:
    model, query = resolve(args)
    system = FptSystem(model, query, reduce=not args.no_reduce)
    mode = _parse_mode(args.mode, system)
    specs = args.m or [",".join("1" if j == i else "0" for j in range(system.npop)) for i in range(system.npop)]
    equations = [format_generator(system, _parse_exps(s, system.pop_names), mode) for s in specs]
    payload = {"species": system.pop_names, "mode": list(mode) if mode else None, "equations": equations}
    lines = list(equations)
    if args.constraints:
        cons = constraint_set(system, query, order=query.order)
        payload["constraints"] = [
            {
                "label": [str(x) for x in c.label],
                "terms": [[v.name(), str(k)] for v, k in c.terms],
                "constant": str(c.constant),
            }
            for c in cons
        ]
        lines.append(f"{len(cons)} constraints at order {query.order}:")
        lines += [c.to_string(system.pop_names) for c in cons]
    _emit(args, payload, None, "\n".join(lines), out)
    return EXIT_OK


def _sdpa_paths(args, query, order) -> tuple[Path, Path]:
    stem = Path(args.model).stem
    d = Path(args.export_dir)
    return d / f"{stem}_r{order}_min.dat-s", d / f"{stem}_r{order}_max.dat-s"


def _bound_export(args, model, query, out) -> int:
    from .solver import needed_scales

    scales = {}
    if not args.no_scale:
        missing = needed_scales(model, query, not args.no_reduce)
        if missing:
            from .ssa import pilot_scales

            scales = pilot_scales(model, query, missing, seed=args.seed)
    paths = _sdpa_paths(args, query, query.order)
    values, status, notes = [], [], []
    for sense, path in zip((MINIMIZE, MAXIMIZE), paths):
        prob = assemble(model, query, sense, scale=not args.no_scale, species_scales=scales, reduce=not args.no_reduce)
        try:
            sdp, low = lower_to_standard(prob)
        except LoweringInfeasible as exc:
            raise InputError(str(exc)) from None
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(export_sdpa(sdp, comment=f"{Path(args.model).stem} order {query.order} {sense}"))
        result = path.with_suffix(".out")
        if result.exists():
            sol = lift(parse_sdpa_solution(result.read_text()), low, prob.var_index)
            status.append(sol.status.value)
            values.append(sol.primal_objective if sol.status == Status.OPTIMAL else None)
        else:
            status.append("pending")
            values.append(None)
            notes.append(f"wrote {path}; solve it and save the SDPA output as {result}")
    payload = {"order": query.order, "lower": values[0], "upper": values[1], "status": {"lower": status[0], "upper": status[1]}, "files": [str(p) for p in paths], "notes": notes}
    text = "\n".join(notes + [f"r={query.order}  lower={_num(values[0])}  upper={_num(values[1])}  ({status[0]}/{status[1]})"])
    _emit(args, payload, [{"order": query.order, "lower": values[0], "upper": values[1]}], text, out)
    if all(s == "pending" for s in status):
        return EXIT_OK
    return EXIT_OK if all(s == Status.OPTIMAL.value for s in status) else EXIT_PARTIAL


def cmd_bound(args, out) -> int:
    model, query = resolve(args)
    if args.solver == "export":
        return _bound_export(args, model, query, out)
    res = bound(model, query, **_solve_opts(args))
    payload = res.as_dict()
    lines = [
        f"r={res.order}  lower={_num(res.lower)}  upper={_num(res.upper)}",
        f"status: lower {res.statuses[0]}, upper {res.statuses[1]}  ({res.seconds:.2f}s)",
    ]
    for name, v in res.species_scales.items():
        lines.append(f"scale {name} = {v:g} (pilot simulation)")
    lines += [f"warning: {w}" for w in res.warnings]
    row = {"order": res.order, "lower": res.lower, "upper": res.upper, "status_lower": res.statuses[0], "status_upper": res.statuses[1]}
    _emit(args, payload, [row], "\n".join(lines), out)
    return EXIT_OK if res.ok else EXIT_PARTIAL


def monotone_violations(values: list[float | None], slack: float) -> list[int]:
    """Indices i where values[i] drops below the last defined earlier value by more than slack."""
    out = []
    best = -math.inf
    for i, v in enumerate(values):
        if v is None:
            continue
        if v < best - slack:
            out.append(i)
        best = max(best, v)
    return out


def cmd_cdf(args, out) -> int:
    model, query = resolve(args)
    query = query.with_(objective=Objective.HIT_PROBABILITY)
    grid = sorted(args.grid)
    if not grid or grid[0] <= 0:
        raise InputError("grid horizons must be positive")
    opts = _solve_opts(args)
    if not args.no_scale:
        from .solver import needed_scales

        missing = needed_scales(model, query, not args.no_reduce)
        if missing:
            from .ssa import pilot_scales

            opts["species_scales"] = pilot_scales(model, query.with_(horizon=grid[-1]), missing, seed=args.seed)

    def point(T):
        try:
            return bound(model, query.with_(horizon=T), **opts)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=workers()) as pool:
        results = list(pool.map(point, grid))
    ssa = None
    if args.ssa:
        from .ssa import empirical_cdf, simulate_fpt

        samples = simulate_fpt(model, query.with_(horizon=grid[-1]), args.ssa, args.seed)
        ssa = empirical_cdf(samples, grid)
    rows, warnings, partial = [], [], False
    for k, (T, res) in enumerate(zip(grid, results)):
        row = {"T": T, "lower": None, "upper": None, "status_lower": "error", "status_upper": "error"}
        if isinstance(res, Exception):
            warnings.append(f"T={T:g}: {res}")
            partial = True
        else:
            row.update(lower=res.lower, upper=res.upper, status_lower=res.statuses[0], status_upper=res.statuses[1])
            partial |= not res.ok
            warnings += [f"T={T:g}: {w}" for w in res.warnings]
        if ssa is not None:
            row.update(ssa=ssa[k].p, ssa_low=ssa[k].low, ssa_high=ssa[k].high)
        rows.append(row)
    slack = 2 * args.gap_tol
    for side in ("lower", "upper"):
        for i in monotone_violations([r[side] for r in rows], slack):
            warnings.append(f"{side} curve decreases at T={rows[i]['T']:g} beyond {slack:g}; solver accuracy")
    header = f"{'T':>10} {'lower':>12} {'upper':>12}  status" + ("  ssa" if ssa else "")
    lines = [header]
    for r in rows:
        line = f"{r['T']:>10.4g} {_num(r['lower']):>12} {_num(r['upper']):>12}  {r['status_lower']}/{r['status_upper']}"
        if ssa is not None:
            line += f"  {r['ssa']:.4f} [{r['ssa_low']:.4f}, {r['ssa_high']:.4f}]"
        lines.append(line)
    lines += [f"warning: {w}" for w in warnings]
    _emit(args, {"order": query.order, "rows": rows, "warnings": warnings}, rows, "\n".join(lines), out)
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_table(args, out) -> int:
    model, query = resolve(args)
    if args.rmax < 1:
        raise InputError("--rmax must be at least 1")
    opts = _solve_opts(args)
    if not args.no_scale:
        from .solver import needed_scales

        missing = needed_scales(model, query, not args.no_reduce)
        if missing:
            from .ssa import pilot_scales

            opts["species_scales"] = pilot_scales(model, query, missing, seed=args.seed)
    orders = list(range(1, args.rmax + 1))

    def point(r):
        try:
            return bound(model, query, r, **opts)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=workers()) as pool:
        results = list(pool.map(point, orders))
    rows, warnings, partial = [], [], False
    last = (None, None)
    for r, res in zip(orders, results):
        if isinstance(res, Exception):
            rows.append({"r": r, "lower": None, "upper": None, "width": None, "log10_width": None, "status": "error"})
            warnings.append(f"r={r}: {res}")
            partial = True
            continue
        w = res.width
        status = "optimal" if res.ok else "/".join(res.statuses)
        rows.append({
            "r": r,
            "lower": res.lower,
            "upper": res.upper,
            "width": w,
            "log10_width": math.log10(w) if w is not None and w > 0 else None,
            "status": status,
        })
        partial |= not res.ok
        warnings += [f"r={r}: {x}" for x in res.warnings]
        if res.lower is None or res.upper is None:
            warnings.append(f"r={r}: last valid bounds {_num(last[0])}, {_num(last[1])}")
        last = (res.lower if res.lower is not None else last[0], res.upper if res.upper is not None else last[1])
    widths = [row["width"] for row in rows if row["width"] is not None]
    decreasing = all(b < a for a, b in zip(widths, widths[1:]))
    lines = [f"{'r':>3} {'lower':>12} {'upper':>12} {'log10 width':>12}  status"]
    for row in rows:
        lw = "-" if row["log10_width"] is None else f"{row['log10_width']:.3f}"
        lines.append(f"{row['r']:>3} {_num(row['lower']):>12} {_num(row['upper']):>12} {lw:>12}  {row['status']}")
    lines.append(f"widths strictly decreasing: {'yes' if decreasing else 'no'}")
    lines += [f"warning: {w}" for w in warnings]
    _emit(args, {"rows": rows, "widths_decreasing": decreasing, "warnings": warnings}, rows, "\n".join(lines), out)
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_simulate(args, out) -> int:
    from .ssa import mean_fpt, simulate_fpt

    model, query = resolve(args)
    if args.n < 2:
        raise InputError("--n must be at least 2")
    if not 0 < args.confidence < 1:
        raise InputError("--confidence must lie in (0, 1)")
    samples = simulate_fpt(model, query, args.n, args.seed, backend=args.backend)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            samples.write_csv(fh)
    hits = {}
    for name, _ in query.thresholds:
        hits[name] = int(np.sum(samples.hit_index == samples._faces.index(name)))
    hits["horizon"] = int(np.sum(samples.hit_index == -1))
    hits["diverged"] = samples.n_diverged
    payload = {"n": len(samples), "seed": args.seed, "backend": samples.backend, "hits": hits, "warnings": samples.warnings()}
    lines = [f"{len(samples)} trajectories (seed {args.seed}, {samples.backend})"]
    lines.append("exits: " + ", ".join(f"{k} {v}" for k, v in hits.items()))
    try:
        est = mean_fpt(samples, args.confidence)
        payload["mean"] = est.as_dict()
        lines.append(f"E[tau] ~ {est.mean:.6g} +/- {est.half_width:.3g} ({args.confidence:.0%} CI)")
    except ValueError as exc:
        payload["mean"] = None
        lines.append(f"no mean estimate: {exc}")
    lines += [f"warning: {w}" for w in samples.warnings()]
    if args.format == "csv":
        buf = io.StringIO()
        samples.write_csv(buf)
        out.write(buf.getvalue())
    else:
        _emit(args, payload, None, "\n".join(lines), out)
    return EXIT_OK


def cmd_export(args, out) -> int:
    model, query = resolve(args)
    scales = {}
    if not args.no_scale:
        from .solver import needed_scales

        missing = needed_scales(model, query, not args.no_reduce)
        if missing:
            from .ssa import pilot_scales

            scales = pilot_scales(model, query, missing, seed=args.seed)
    prob = assemble(model, query, args.sense, scale=not args.no_scale, species_scales=scales, reduce=not args.no_reduce)
    try:
        sdp, _ = lower_to_standard(prob)
    except LoweringInfeasible as exc:
        raise InputError(str(exc)) from None
    text = export_sdpa(sdp, comment=f"{Path(args.model).stem} order {query.order} {args.sense}")
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "moments": cmd_moments,
    "bound": cmd_bound,
    "cdf": cmd_cdf,
    "table": cmd_table,
    "simulate": cmd_simulate,
    "export-sdpa": cmd_export,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args, out)
    except (InputError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
