"""Command line front end: ``fpg solve|sweep|convergence``.

All output is CSV or plain text; plotting is left to the user.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from fpgalerkin.adaptive import Action, AdaptiveConfig, NodalFunction, center_hat, run
from fpgalerkin.assembly import energy_error, worker_count
from fpgalerkin.config import RunConfig, emit_config, load_config
from fpgalerkin.errors import DomainError
from fpgalerkin.mesh import build_initial, write_mesh, write_vtk
from fpgalerkin.problems import REGISTRY, problem_registry

logger = logging.getLogger("fpgalerkin")

RECORD_COLUMNS = ["step", "dof", "eta_fem", "eta_fp", "osc", "total", "action", "cg_iters", "wall_ms"]
SUMMARY_COLUMNS = ["eps", "slope", "final_total", "final_dof"]
CONVERGENCE_COLUMNS = ["dof", "energy_error", "eta_fem", "eta_fp", "effectivity"]


def _num(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12e}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _num(v) for v in row])


def write_records(path, records):
    _write_csv(path, RECORD_COLUMNS,
               ([r.step, r.dof, r.eta_fem, r.eta_fp, r.osc, r.total, str(r.action), r.cg_iters,
                 r.wall_ms] for r in records))


def write_solution(path, u: NodalFunction):
    with open(path, "w") as fh:
        for i, v in enumerate(u.values):
            fh.write(f"{i} {float(v)!r}\n")


def decay_slope(records, last=5):
    """Least-squares slope of log10(total) against log10(dof) over the last
    ``last`` Refine records; NaN when fewer than two are available."""
    ref = [r for r in records if r.action is Action.REFINE][-last:]
    if len(ref) < 2 or len({r.dof for r in ref}) < 2:
        return math.nan
    x = np.log10([r.dof for r in ref])
    y = np.log10([r.total for r in ref])
    return float(np.polyfit(x, y, 1)[0])


def adaptive_config(config: RunConfig, marking="dorfler", eps=None):
    problem = problem_registry(config.problem, config.eps if eps is None else eps)
    return AdaptiveConfig(problem, theta=config.theta, marking_fraction=config.marking_fraction,
                          max_dof=config.max_dof, h_min=config.h_min,
                          rtol_linear=config.rtol_linear, max_outer=config.max_outer,
                          marking=config.marking or marking, timing=config.timing)


def initial_state(config: RunConfig):
    mesh = build_initial(config.mesh)
    if config.initial_guess == "center-hat":
        u0 = center_hat(mesh)
    elif config.initial_guess == "zero":
        u0 = NodalFunction.zeros(mesh)
    else:
        raise DomainError(f"unknown initial guess {config.initial_guess!r}")
    return mesh, u0


def solve(config: RunConfig, out=None, callback=None, marking="dorfler"):
    """Run one adaptive solve and write its files into ``out``."""
    out = Path(config.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    acfg = adaptive_config(config, marking)
    mesh, u0 = initial_state(config)
    result = run(acfg, mesh, u0, callback=callback)
    write_records(out / "records.csv", result.records)
    write_mesh(result.mesh, out / "mesh.txt")
    write_solution(out / "solution.txt", result.u)
    (out / "config.txt").write_text(emit_config(config))
    return result


def cmd_solve(config: RunConfig) -> int:
    result = solve(config)
    last = result.records[-1]
    print(f"{config.problem} eps={config.eps:g}: {len(result.records)} steps, "
          f"dof={last.dof}, total={last.total:.4e}, stop={result.stop_reason}")
    return 0


def _sweep_one(config: RunConfig, eps: float):
    sub = Path(config.out) / f"eps_{eps:.0e}"
    result = solve(config.replace(eps=eps), out=sub)
    last = result.records[-1]
    return decay_slope(result.records), last.total, last.dof


def cmd_sweep(config: RunConfig) -> int:
    if not config.eps_list:
        raise DomainError("eps list must not be empty")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = min(worker_count(), len(config.eps_list))
    rows, failed = [], 0
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_one, config, eps) for eps in config.eps_list]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # reported per eps, sweep continues
                    outcomes.append(exc)
    else:
        outcomes = []
        for eps in config.eps_list:
            try:
                outcomes.append(_sweep_one(config, eps))
            except Exception as exc:
                outcomes.append(exc)
    for eps, res in zip(config.eps_list, outcomes):
        if isinstance(res, Exception):
            failed += 1
            print(f"eps={eps:g}: FAILED ({res})", file=sys.stderr)
            rows.append([eps, math.nan, math.nan, "nan"])
        else:
            slope, total, dof = res
            print(f"eps={eps:g}: slope={slope:.3f} final_total={total:.4e} final_dof={dof}")
            rows.append([eps, slope, total, dof])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
    return 1 if failed else 0


def convergence_table(config: RunConfig, out=None):
    """Run with exact-error tracking. Returns the rows written to convergence.csv."""
    problem = problem_registry(config.problem, config.eps)
    if problem.exact is None:
        raise DomainError(f"problem {config.problem!r} has no exact solution")
    rows = []

    def track(record, mesh, u_next, est):
        if record.action is Action.ITERATE:
            return
        err = energy_error(u_next, problem.exact, problem.exact_grad, problem.eps)
        rows.append([record.dof, err, record.eta_fem, record.eta_fp, record.total / err])

    out = Path(config.out if out is None else out)
    solve(config, out=out, callback=track, marking="uniform")
    _write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, rows)
    return rows


def cmd_convergence(config: RunConfig) -> int:
    rows = convergence_table(config)
    for dof, err, _, _, eff in rows:
        print(f"dof={dof:8d} energy_error={err:.4e} effectivity={eff:.3f}")
    return 0


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "convergence": cmd_convergence}


def build_parser():
    p = argparse.ArgumentParser(prog="fpg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="key=value configuration file")
    p.add_argument("--problem", choices=sorted(REGISTRY))
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-list", help="comma-separated eps values for sweep")
    p.add_argument("--theta", type=float)
    p.add_argument("--marking-fraction", type=float)
    p.add_argument("--marking", choices=["dorfler", "uniform"])
    p.add_argument("--max-dof", type=int)
    p.add_argument("--mesh", help="paper4 or uniform:N")
    p.add_argument("--initial-guess", choices=["center-hat", "zero"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall-clock times (makes records.csv non-reproducible)")
    p.add_argument("--vtk", action="store_true", help="also write mesh.vtk with the solution")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in
                 ("problem", "eps", "theta", "marking_fraction", "marking", "max_dof", "mesh",
                  "initial_guess", "out", "timing")
                 if getattr(args, k) is not None}
    if args.eps_list is not None:
        overrides["eps_list"] = tuple(float(s) for s in args.eps_list.split(",") if s.strip())
    return config.replace(**overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        status = COMMANDS[args.command](config)
        if args.vtk and args.command == "solve":
            _vtk_from_outputs(Path(config.out))
    except (OSError, ValueError, KeyError) as exc:
        print(f"fpg: error: {exc}", file=sys.stderr)
        return 1
    return status


def _vtk_from_outputs(out: Path):
    from fpgalerkin.mesh import read_mesh

    mesh = read_mesh(out / "mesh.txt")
    values = np.loadtxt(out / "solution.txt", ndmin=2)[:, 1]
    write_vtk(mesh, out / "mesh.vtk", {"u": values})


if __name__ == "__main__":
    sys.exit(main())
