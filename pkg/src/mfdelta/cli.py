"""Command-line front end: run experiments, validate, export mean curves."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .backend import active_backend
from .config import load_config, with_overrides
from .errors import ConfigParse, DeltaEngineError, NoConvergence
from .estimators import compare_methods, write_estimates_csv, write_trace_csv
from .meanfield import particle_curves, write_curves_csv
from .models import resolve_curves, risk_neutral_simulation_spec
from .rng import brownian_increments
from .sde import simulate_bundle
from .validation import run_checks

PATH_DUMP_HEADER = "t,W,X,Y,J"


def _cmd_run(args) -> int:
    cfg = with_overrides(
        load_config(args.config), seed=args.seed, out=args.out, threads=args.threads
    )
    if cfg.applied_defaults:
        print(
            f"note: defaults applied for {', '.join(sorted(cfg.applied_defaults))}",
            file=sys.stderr,
        )
    model = cfg.build_model()
    payoff = cfg.build_payoff()
    settings = cfg.settings()
    os.makedirs(cfg.out, exist_ok=True)

    rows = compare_methods(model, payoff, settings, cfg.methods, cfg.h_list)
    est_path = os.path.join(cfg.out, "estimates.csv")
    trace_path = os.path.join(cfg.out, "trace.csv")
    with open(est_path, "w", encoding="utf-8", newline="\n") as fh:
        write_estimates_csv(rows, fh, include_timings=cfg.timings)
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        write_trace_csv(rows, fh)

    failed = 0
    for row in rows:
        if row.error is not None:
            failed += 1
            print(f"FAILED {row.error}")
            continue
        e = row.estimate
        h_txt = "" if e.h is None else f" h={e.h:g}"
        print(
            f"{e.method}{h_txt}: delta={e.value:.6f} se={e.std_error:.6f} "
            f"n={e.n_paths} [{e.wall_time * 1000.0:.0f} ms]"
        )
    if cfg.dump_path:
        _dump_first_path(cfg, model, os.path.join(cfg.out, "path0.csv"))
    print(f"wrote {est_path} and {trace_path} (backend: {active_backend()})")
    return 1 if failed == len(rows) else 0


def _dump_first_path(cfg, model, path: str) -> None:
    grid = cfg.grid()
    curves = resolve_curves(model, cfg.x0, grid)
    sim_model = risk_neutral_simulation_spec(model)
    noise = brownian_increments(cfg.seed, 0, grid)
    bundle = simulate_bundle(sim_model, curves, cfg.x0, grid, noise, cfg.log_euler)
    t = grid.nodes()
    w = np.concatenate([[0.0], np.cumsum(noise.increments)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PATH_DUMP_HEADER + "\n")
        for i in range(grid.n_steps + 1):
            fh.write(
                f"{t[i]:.17g},{w[i]:.17g},{bundle.x_path[i]:.17g},"
                f"{bundle.y_path[i]:.17g},{bundle.jac_path[i]:.17g}\n"
            )


def _cmd_meanfield(args) -> int:
    cfg = with_overrides(
        load_config(args.config), seed=args.seed, out=args.out, threads=args.threads
    )
    model = cfg.build_model()
    grid = cfg.grid()
    os.makedirs(cfg.out, exist_ok=True)

    analytic = None
    if model.analytic_curves is not None:
        analytic = model.analytic_curves(cfg.x0, grid)
        with open(
            os.path.join(cfg.out, "curves_analytic.csv"), "w", encoding="utf-8", newline="\n"
        ) as fh:
            write_curves_csv(grid, analytic, fh)

    try:
        particle = particle_curves(
            model,
            cfg.x0,
            grid,
            n_particles=cfg.n_particles,
            max_iters=cfg.picard_max_iters,
            tol=cfg.picard_tol,
            seed=cfg.seed,
        )
    except NoConvergence as exc:
        print(
            f"particle resolver did not converge: {exc} "
            f"(n_particles={cfg.n_particles}, max_iters={cfg.picard_max_iters}, "
            f"tol={cfg.picard_tol:g})",
            file=sys.stderr,
        )
        return 1

    particle_path = os.path.join(cfg.out, "curves_particle.csv")
    with open(particle_path, "w", encoding="utf-8", newline="\n") as fh:
        write_curves_csv(grid, particle, fh)
        if analytic is not None:
            dists = {
                "rho": float(np.max(np.abs(particle.rho - analytic.rho))),
                "pi": float(np.max(np.abs(particle.pi - analytic.pi))),
                "drho_dx": float(np.max(np.abs(particle.drho_dx - analytic.drho_dx))),
                "dpi_dx": float(np.max(np.abs(particle.dpi_dx - analytic.dpi_dx))),
            }
            footer = " ".join(f"{k}={v:.17g}" for k, v in dists.items())
            fh.write(f"# sup_distance {footer}\n")
            print(f"sup distance to analytic curves: {footer}")
    print(f"wrote curves to {cfg.out}")
    return 0


def _cmd_validate(args) -> int:
    results = run_checks(args.level)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
        failures += 0 if r.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed ({args.level} level)")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfdelta",
        description=(
            "Monte Carlo deltas of mean-field SDE expectations via Malliavin "
            "weights, with finite-difference and pathwise comparators."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the estimators of a config file")
    run_p.add_argument("--config", required=True, help="path to a run config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument(
        "--threads", type=int, default=None, help="worker threads (results invariant)"
    )
    run_p.set_defaults(func=_cmd_run)

    mf_p = sub.add_parser("meanfield", help="export analytic and particle mean curves")
    mf_p.add_argument("--config", required=True)
    mf_p.add_argument("--seed", type=int, default=None)
    mf_p.add_argument("--out", default=None)
    mf_p.add_argument("--threads", type=int, default=None)
    mf_p.set_defaults(func=_cmd_meanfield)

    val_p = sub.add_parser("validate", help="run the named self-check suite")
    val_p.add_argument("--level", choices=("fast", "full"), default="fast")
    val_p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigParse as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DeltaEngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
