"""Command-line entry point: ``kslab check|run|sweep|mms``.

Exit codes: 0 success (or feasible for ``check``), 2 infeasible, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import scipy.fft as sfft

from kslab.config import (
    apply_overrides,
    build_config,
    load_config,
    parse_sweep,
    serialize_config,
    sweep_points,
)
from kslab.diagnostics import distances
from kslab.errors import InvalidConfigError, KSLabError
from kslab.mms import MODES, mms_study
from kslab.params import ModelParams, RegimeReport, SteadyState, check_regime, steady_state
from kslab.stepper import RunConfig, RunResult, run

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
DEFAULT_OUT = "kslab-out"


def _out_dir(args) -> Optional[str]:
    return args.out or os.environ.get("KSLAB_OUT")


def _apply_flags(cfg: RunConfig, args, out: Optional[str]) -> RunConfig:
    changes = {}
    if out is not None:
        changes["out_dir"] = out
    if getattr(args, "sample_dt", None) is not None:
        changes["sample_dt"] = args.sample_dt
    if getattr(args, "seed", None) is not None:
        changes["initial"] = dataclasses.replace(cfg.initial, seed=args.seed)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def format_report(report: RegimeReport) -> str:
    lines = [f"regime:   {report.regime.value}", f"feasible: {str(report.feasible).lower()}"]
    if report.delta1 is not None:
        lines.append(f"delta1:   {report.delta1:.12g}")
    if report.a1_prime is not None:
        lines.append(f"a1':      {report.a1_prime:.12g}")
    if report.delta2_window is not None:
        lo, hi = report.delta2_window
        lines.append(f"delta2 window: ({lo:.12g}, {hi:.12g})")
    if report.margin is not None:
        lines.append(f"margin:   {report.margin:.6g}")
    if report.target is not None:
        t = report.target
        lines.append(f"target:   n1={t.N1:.12g} n2={t.N2:.12g} c={t.Cstar:.12g} u=0")
    if report.reason:
        lines.append(f"reason:   {report.reason}")
    return "\n".join(lines)


def format_summary(res: RunResult) -> str:
    d1, d2, dc, du = res.final_distances()
    return (
        f"converged={str(res.converged).lower()} t={res.state.t:.6g} steps={res.steps} "
        f"dist_n1={d1:.3e} dist_n2={d2:.3e} dist_c={dc:.3e} linf_u={du:.3e} "
        f"wall={res.wall_time:.2f}s csv={res.csv_path}"
    )


# -- subcommands ------------------------------------------------------------------------


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    report = check_regime(cfg.params, cfg.search)
    payload = json.dumps(report.to_dict(), sort_keys=True)
    print(format_report(report))
    print(payload)
    out = _out_dir(args)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "check.json").write_text(payload + "\n")
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    cfg = _apply_flags(cfg, args, _out_dir(args) or cfg.out_dir or DEFAULT_OUT)
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(cfg.out_dir) / "config.ini").write_text(serialize_config(cfg))
    with sfft.set_workers(args.threads):
        res = run(cfg)
    print(format_summary(res))
    return EXIT_OK


def observed_outcome(state, p: ModelParams, tol: float, tol_u: float) -> str:
    """Which constant state, if any, the final state sits within ``tol`` of."""
    candidates = []
    if 0.0 < p.a1 < 1.0 and 0.0 < p.a2 < 1.0:
        candidates.append(("coexistence", steady_state(p)))
    candidates.append(("exclusion", SteadyState(0.0, 1.0, p.beta)))
    candidates.append(("exclusion_n2", SteadyState(1.0, 0.0, p.alpha)))
    for name, target in candidates:
        d1, d2, dc, du = distances(state, target)
        if max(d1, d2, dc) <= tol and du <= tol_u:
            return name
    return "none"


SWEEP_FIELDS = ("predicted_regime", "feasible", "margin", "observed", "converged", "t_final",
                "dist_n1", "dist_n2", "dist_c", "linf_u", "error")


def _sweep_point(task):
    """Run one sweep point; failures are returned in the row instead of raised."""
    raw, overrides, base_dir, out_dir = task
    row = {k: "" for k in SWEEP_FIELDS}
    try:
        cfg = build_config(apply_overrides(raw, overrides), Path(base_dir))
        cfg = dataclasses.replace(cfg, out_dir=out_dir)
        report = check_regime(cfg.params, cfg.search)
        row.update(predicted_regime=report.regime.value, feasible=str(report.feasible).lower(),
                   margin="" if report.margin is None else f"{report.margin:.16e}")
        res = run(cfg)
        d1, d2, dc, du = res.final_distances()
        row.update(
            observed=observed_outcome(res.state, cfg.params, cfg.tol, cfg.tol_u),
            converged=str(res.converged).lower(),
            t_final=f"{res.state.t:.16e}",
            dist_n1=f"{d1:.16e}", dist_n2=f"{d2:.16e}", dist_c=f"{dc:.16e}", linf_u=f"{du:.16e}",
        )
    except (KSLabError, ValueError, FloatingPointError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read sweep config {path}: {exc}") from exc
    raw, axes = parse_sweep(text)
    points = sweep_points(axes)
    out = Path(_out_dir(args) or raw.get("output", {}).get("dir") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        raw.setdefault("initial", {})["seed"] = str(args.seed)
    if args.sample_dt is not None:
        raw.setdefault("run", {})["sample_dt"] = repr(args.sample_dt)
    tasks = [(raw, pt.overrides, str(path.parent), str(out / f"point_{pt.index:04d}")) for pt in points]
    if args.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_sweep_point, tasks))  # map keeps submission order
    else:
        rows = [_sweep_point(t) for t in tasks]

    names = [name for name, _ in axes]
    table = out / "sweep.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *names, *SWEEP_FIELDS])
        for pt, row in zip(points, rows):
            writer.writerow([pt.index, *(v for _, v in pt.overrides), *(row[k] for k in SWEEP_FIELDS)])
    n_err = sum(1 for r in rows if r["error"])
    print(f"sweep: {len(rows)} points, {n_err} errors, table={table}")
    return EXIT_OK


def cmd_mms(args) -> int:
    res = mms_study(args.levels, mode=args.mode, dim=args.dim, t_end=args.t_end)
    print(res.table())
    finite = [o for o in res.orders if math.isfinite(o)]
    if finite:
        print(f"min observed order: {min(finite):.4f}")
    out = _out_dir(args)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / f"mms_{args.mode}.txt").write_text(res.table() + "\n")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kslab", description="Two-species chemotaxis-Stokes simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="INI config file")
        p.add_argument("--out", help="output directory (default: $KSLAB_OUT or ./kslab-out)")
        p.add_argument("--seed", type=int, help="override initial.seed")
        p.add_argument("--threads", type=int, default=1, help="worker count (default 1)")
        p.add_argument("--sample-dt", type=float, help="override run.sample_dt")

    p = sub.add_parser("check", help="classify the parameter regime")
    common(p)
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("run", help="integrate one configuration")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="check and run every point of a parameter grid")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("mms", help="manufactured-solution convergence table")
    common(p, config_required=False)
    p.add_argument("--levels", type=int, nargs="+", default=[32, 64, 128])
    p.add_argument("--mode", choices=MODES, default="diffusion-reaction")
    p.add_argument("--dim", type=int, choices=(2, 3), default=2)
    p.add_argument("--t-end", type=float, default=0.05)
    p.set_defaults(func=cmd_mms)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        where = f" [{exc.key}]" if exc.key else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except KSLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
