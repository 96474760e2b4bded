"""Command-line front end.

    qys run    --n 3 --lambda 0 --c 0.1667 --rbar 0 --psi 1 --dpsi -0.1667 --F 0 --fwd 10
    qys shoot  --n 3 --lambda 1 --c 1 --rbar 2 --F0 0 --F0 -1 --r-end 5
    qys sweep  --cell above-eps-c-pos --samples 50 --seed 7
    qys oracle --family exponential --n 3 --c 0.1666666667 --m 1
    qys table

Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import classifier, core, tip
from .classifier import classify, falsification_grid, format_table, sweep_regimes, table_rows
from .config import RunConfig, build_config, load_yaml, merge
from .errors import ConfigError, NonPositiveRbar, QYSError
from .export import export_trajectory
from .integrator import Trajectory, integrate_line

log = logging.getLogger("qys")

_MODE = {"run": "line", "shoot": "tip", "sweep": "sweep", "oracle": "oracle"}


def _setup_logging() -> None:
    level = os.environ.get("QYS_LOG", "").strip().upper()
    if not level or level in ("0", "OFF"):
        logging.getLogger("qys").addHandler(logging.NullHandler())
        return
    if level in ("1", "ON"):
        level = "INFO"
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(name)s %(levelname)s %(message)s")


def _parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps
    # the subparser from clobbering a value given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--rtol", type=float)
    common.add_argument("--atol", type=float)

    params = argparse.ArgumentParser(add_help=False)
    params.add_argument("--n", type=int)
    params.add_argument("--lambda", "--lam", dest="lam", type=float)
    params.add_argument("--c", type=float)
    params.add_argument("--rbar", type=float)

    ap = argparse.ArgumentParser(
        prog="qys", description="quasi-Yamabe soliton ODE laboratory", parents=[common]
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common, params], help="single line-mode trajectory")
    run.add_argument("--psi", type=float)
    run.add_argument("--dpsi", type=float)
    run.add_argument("--F", type=float)
    run.add_argument("--r0", type=float)
    run.add_argument("--back", type=float)
    run.add_argument("--fwd", type=float)
    run.add_argument("--formulation", choices=["constraint", "flow"])
    run.add_argument("--event", action="append", dest="events", help="enable an event kind (repeatable)")
    run.add_argument("--stride", type=int)

    shoot = sub.add_parser("shoot", parents=[common, params], help="tip-mode shooting")
    shoot.add_argument("--F0", type=float, action="append", help="repeat to sweep F0")
    shoot.add_argument("--r-end", dest="r_end", type=float)
    shoot.add_argument("--r-start", dest="r_start", type=float)
    shoot.add_argument("--order", type=int)
    shoot.add_argument("--stride", type=int)

    sweep = sub.add_parser("sweep", parents=[common], help="regime sweep")
    sweep.add_argument("--cell", action="append", dest="cells", choices=list(classifier.FALSIFICATION_CELLS))
    sweep.add_argument("--samples", type=int)
    sweep.add_argument("--span", type=float)
    sweep.add_argument("--eps", type=float)
    sweep.add_argument("--workers", type=int)

    oracle = sub.add_parser("oracle", parents=[common], help="exact-family self-test")
    oracle.add_argument("--family", choices=["exponential", "constant_psi"])
    oracle.add_argument("--n", type=int)
    oracle.add_argument("--c", type=float)
    oracle.add_argument("--m", type=float)
    oracle.add_argument("--a", type=float)
    oracle.add_argument("--c1", type=float)
    oracle.add_argument("--lambda", "--lam", dest="lam", type=float)
    oracle.add_argument("--span", type=float)

    table = sub.add_parser("table", parents=[common], help="print the encoded regime table")
    table.add_argument("--format", choices=["tsv", "json"], default="tsv")
    return ap


def _overrides(ns: argparse.Namespace) -> dict:
    o: dict = {"mode": _MODE[ns.command]}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    if getattr(ns, "seed", None) is not None:
        o["seed"] = ns.seed
    put("output", "dir", str(ns.out) if getattr(ns, "out", None) is not None else None)
    put("integrator", "rtol", getattr(ns, "rtol", None))
    put("integrator", "atol", getattr(ns, "atol", None))
    if ns.command in ("run", "shoot"):
        for key, attr in (("n", "n"), ("lambda", "lam"), ("c", "c"), ("rbar", "rbar")):
            put("params", key, getattr(ns, attr))
        put("output", "stride", ns.stride)
    if ns.command == "run":
        for key in ("psi", "dpsi", "F"):
            put("init", key, getattr(ns, key))
        put("init", "r", ns.r0)
        put("span", "back", ns.back)
        put("span", "fwd", ns.fwd)
        if ns.formulation:
            o["formulation"] = ns.formulation
        if ns.events:
            o["events"] = ns.events
    elif ns.command == "shoot":
        put("tip", "F0", ns.F0)
        put("tip", "r_end", ns.r_end)
        put("tip", "r_start", ns.r_start)
        put("tip", "order", ns.order)
    elif ns.command == "sweep":
        put("sweep", "cells", ns.cells)
        put("sweep", "samples", ns.samples)
        put("sweep", "span", ns.span)
        put("sweep", "eps", ns.eps)
        put("sweep", "workers", ns.workers)
    elif ns.command == "oracle":
        for key, attr in (("family", "family"), ("n", "n"), ("c", "c"), ("m", "m"), ("a", "a"),
                          ("c1", "c1"), ("lambda", "lam"), ("span", "span")):
            put("oracle", key, getattr(ns, attr))
    return o


def _summary(traj: Trajectory) -> dict:
    cls = classify(traj)
    return {
        "verdict": cls.verdict.value,
        "r_star": cls.r_star,
        "alpha": cls.alpha,
        "regime": None if cls.regime is None else cls.regime.r_condition.value,
        "consistent": cls.consistent_with_paper,
        "notes": list(cls.notes),
        "termination": [t.value for t in traj.terminations],
        "events": [{"kind": e.kind.value, "r": e.r} for e in traj.events],
        "span": list(traj.span),
        "samples": len(traj),
        "max_abs_rbar_residual": float(np.nanmax(np.abs(traj.rbar_residual))),
    }


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def cmd_run(cfg: RunConfig) -> int:
    traj = integrate_line(cfg.formulation, cfg.init, cfg.params, cfg.back, cfg.fwd, cfg.integrator, cfg.events)
    export_trajectory(traj, cfg.out_dir / "trajectory.csv", stride=cfg.stride)
    summary = _summary(traj)
    _write_json(cfg.out_dir / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_shoot(cfg: RunConfig) -> int:
    rows = []
    for i, F0 in enumerate(cfg.tip_F0):
        traj = tip.shoot_tip(
            cfg.params, F0, cfg.tip_r_end, cfg.integrator,
            order=cfg.tip_order, r_start=cfg.tip_r_start, events=cfg.events,
        )
        export_trajectory(traj, cfg.out_dir / f"tip_{i:03d}.csv", stride=cfg.stride)
        series = tip.tip_series(cfg.params, F0, cfg.tip_order, cfg.tip_r_start)
        row = {"F0": F0, "a1": series.a1, "a3": series.a3, "conical": series.conical}
        row.update(_summary(traj))
        rows.append(row)
        print(json.dumps(row, sort_keys=True))
    (cfg.out_dir / "shoot.jsonl").write_text(classifier.rows_to_jsonl(rows))
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    grid = list(cfg.sweep_runs)
    for k, cell in enumerate(cfg.sweep_cells):
        grid += falsification_grid(cell, cfg.sweep_samples, cfg.seed + k, cfg.sweep_span, cfg.sweep_eps)
    rows = sweep_regimes(grid, cfg.integrator, cfg.sweep_workers)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "sweep.jsonl").write_text(classifier.rows_to_jsonl(rows))
    counts: dict = {}
    for row in rows:
        counts[row["verdict"]] = counts.get(row["verdict"], 0) + 1
    inconsistent = sum(1 for row in rows if row["consistent"] is False)
    print(json.dumps({"runs": len(rows), "verdicts": counts, "inconsistent": inconsistent}, sort_keys=True))
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    o = cfg.oracle
    span = float(o.get("span", 10.0))
    n = int(o.get("n", 3))
    c = float(o["c"])
    if o["family"] == "exponential":
        sol = core.exact_exponential(float(o.get("m", 1.0)), n, c)
        base, back, fwd = 0.0, span, span
    else:
        a, c1 = float(o.get("a", 1.0)), float(o.get("c1", -1.0))
        sol = core.exact_constant_psi(a, c, c1, lam=float(o.get("lambda", 0.0)), n=n)
        pole = sol.parameters["pole"]
        toward = 1.0 if sol.domain[1] == pole else -1.0
        base = pole - toward * 1.0
        # stop short of the pole; the family leaves every bounded state there
        back, fwd = (span, 0.99) if toward > 0 else (0.99, span)
    print(f"family={sol.family.value}")
    print(f"lambda={sol.params.lam!r}")
    print(f"R={sol.curvature!r}")
    print(f"rbar={sol.params.rbar!r}")
    worst = 0.0
    for fm in ("constraint", "flow"):
        traj = integrate_line(fm, sol.evaluate(base), sol.params, back, fwd, cfg.integrator)
        exact = np.array([sol.evaluate(r).as_tuple()[1:4] for r in traj.r])
        num = np.column_stack([traj.psi, traj.dpsi, traj.F])
        err = float(np.max(np.abs(num - exact)))
        worst = max(worst, err)
        print(f"{fm}: max_state_error={err:.3e} samples={len(traj)} termination={traj.termination.value}")
    ok = worst < 1e-6
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def cmd_table(fmt: str) -> int:
    if fmt == "json":
        rows = [
            {
                "r_condition": cell.r_condition.value,
                "c_sign": cell.c_sign.value,
                "type": cell.soliton_type.value,
                "expectations": [e.value for e in cell.expectations],
                "basis": cell.basis,
            }
            for cell in table_rows()
        ]
        print(json.dumps(rows, indent=2))
    else:
        sys.stdout.write(format_table())
    return 0


def main(argv=None) -> int:
    _setup_logging()
    ap = _parser()
    ns = ap.parse_args(argv)
    if ns.command == "table":
        return cmd_table(ns.format)
    try:
        config = getattr(ns, "config", None)
        base = load_yaml(config) if config else {}
        cfg = build_config(merge(base, _overrides(ns)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    handlers = {"line": cmd_run, "tip": cmd_shoot, "sweep": cmd_sweep, "oracle": cmd_oracle}
    try:
        return handlers[cfg.mode](cfg)
    except NonPositiveRbar as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (QYSError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
