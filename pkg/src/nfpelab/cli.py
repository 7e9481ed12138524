"""Command-line front door.

Subcommands:
    solve <config>      evolve the density and write the run directory
    particles <config>  run the particle system (frozen or self-consistent)
    validate            run the oracle battery
    kernels <config>    sample the kernel, report gamma and checks (iv)/(v)
    report <run_dir>    render figures from a finished run's outputs

Exit codes: 0 ok, 1 solver/battery failure, 2 hypothesis-validation
warnings (run completed), 64 config error, 66 missing input.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import parse_config_file, resolve
from .diagnostics import UniquenessProbe
from .errors import ConfigError, MissingInputError, SolverError
from .fields import write_snapshot
from .kernels import gamma_estimate, sample_kernel, solver_kernel
from .nonlinearity import validate_hypotheses
from .particles import FrozenCoupling, SelfConsistentCoupling, simulate
from .runio import (write_h_eps_csv, write_monitors_csv,
                    write_particle_monitors_csv, write_particles_csv,
                    write_snapshots, write_text)
from .semigroup import EvolutionConfig, Trajectory, evolve

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_HYPOTHESIS = 2
EXIT_CONFIG = 64
EXIT_MISSING = 66


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfpe",
                                description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", type=str, default=None,
                        help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed override")
        sp.add_argument("--threads", type=int, default=None,
                        help="thread budget (NFPE_THREADS fallback)")

    sp = sub.add_parser("solve", help="evolve a density")
    sp.add_argument("config", type=str)
    common(sp)

    sp = sub.add_parser("particles", help="run the particle system")
    sp.add_argument("config", type=str)
    common(sp)

    sp = sub.add_parser("validate", help="run the oracle battery")
    sp.add_argument("--quick", action="store_true",
                    help="skip the evolution-level oracles")
    sp.add_argument("--negative-control", action="store_true",
                    help="inject a known bug to prove the oracles can fail")

    sp = sub.add_parser("kernels", help="sample kernel and report gamma")
    sp.add_argument("config", type=str)
    common(sp)

    sp = sub.add_parser("report", help="render figures for a run directory")
    sp.add_argument("run_dir", type=str)
    return p


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("NFPE_THREADS")
    return int(env) if env else 1


def _load_run(args):
    cfg = parse_config_file(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["output.dir"] = args.out
    base = Path(args.config).resolve().parent
    run = resolve(cfg, base_dir=base)
    out = cfg.get("output.dir")
    if out is None:
        raise ConfigError("no output directory: set output.dir or pass --out")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return run, out_dir


def _write_preamble(run, out_dir: Path):
    write_text(run.config_text(), out_dir / "config.resolved.txt")
    report = validate_hypotheses(run.spec, run.kernel, run.grid)
    write_text(report.to_text() + "\n", out_dir / "validation.txt")
    return report


def cmd_solve(args) -> int:
    run, out_dir = _load_run(args)
    report = _write_preamble(run, out_dir)
    traj = evolve(run.u0, run.evolution, run.spec, run.kernel)
    write_monitors_csv(traj, out_dir / "monitors.csv")
    write_snapshots(traj, out_dir)
    if traj.error is not None:
        write_text(f"solver error: {traj.error}\n", out_dir / "error.txt")
        print(f"solver error: {traj.error}", file=sys.stderr)
        return EXIT_SOLVER
    if run.probes_enabled:
        half = EvolutionConfig(
            T=run.evolution.T, n_steps=2 * run.evolution.n_steps,
            eps=run.evolution.eps, snapshot_every=_half_cadence(run.evolution),
            monitors=run.evolution.monitors, fp_tol=run.evolution.fp_tol,
            max_iter=run.evolution.max_iter)
        traj_half = evolve(run.u0, half, run.spec, run.kernel)
        if traj_half.error is not None:
            print(f"solver error in probe twin: {traj_half.error}",
                  file=sys.stderr)
            return EXIT_SOLVER
        probe = UniquenessProbe(run.probes_eps or (1e-1, 1e-2, 1e-3))
        write_h_eps_csv(probe.run(traj, traj_half), out_dir / "h_eps.csv")
    print(f"run complete: {out_dir}")
    if not report.ok:
        print("hypothesis validation flagged violations (see validation.txt)",
              file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


def _half_cadence(evo: EvolutionConfig) -> int:
    base = evo.snapshot_every if evo.snapshot_every > 0 else evo.n_steps
    return 2 * base


def cmd_particles(args) -> int:
    run, out_dir = _load_run(args)
    report = _write_preamble(run, out_dir)
    p = run.particles
    t_final = p.get("T") or run.evolution.T
    dt = p.get("dt", 1e-2)
    count = p.get("N", 10000)
    mode_name = p.get("mode", "frozen")
    bandwidth = p.get("bandwidth")
    if mode_name == "frozen":
        traj_dir = p.get("trajectory")
        if not traj_dir:
            raise ConfigError("particles.mode = frozen requires "
                              "particles.trajectory = <run dir>")
        traj = _load_trajectory(Path(traj_dir), run)
        mode = FrozenCoupling(traj)
    elif mode_name == "self_consistent":
        from .particles import silverman_bandwidth, sample_initial
        if bandwidth is None:
            ens0 = sample_initial(run.u0, count, run.seed)
            bandwidth = silverman_bandwidth(ens0, run.grid)
        mode = SelfConsistentCoupling(bandwidth)
    else:
        raise ConfigError(f"unknown particles.mode {mode_name!r}")
    result = simulate(run.u0, mode, count, dt, t_final, run.seed,
                      run.spec, run.kernel,
                      snapshot_every=p.get("snapshot_every", 0),
                      bandwidth=bandwidth)
    write_particle_monitors_csv(result, out_dir / "particle_monitors.csv")
    kde_dir = out_dir / "kde"
    kde_dir.mkdir(exist_ok=True)
    for i, kde in enumerate(result.kdes):
        write_snapshot(kde, kde_dir / f"kde_{i:06d}.nfpe")
    if p.get("save_positions"):
        write_particles_csv(result, out_dir / "particles.csv")
    print(f"particle run complete: {out_dir}")
    if not report.ok:
        return EXIT_HYPOTHESIS
    return EXIT_OK


def _load_trajectory(run_dir: Path, run) -> Trajectory:
    from .runio import read_monitors_csv, read_snapshots
    if not run_dir.is_dir():
        raise MissingInputError(f"trajectory directory not found: {run_dir}")
    monitors = run_dir / "monitors.csv"
    if not monitors.exists():
        raise MissingInputError(f"no monitors.csv under {run_dir}")
    cols = read_monitors_csv(monitors)
    times, snaps = read_snapshots(run_dir)
    if not snaps:
        raise MissingInputError(f"no snapshots under {run_dir}")
    grid = snaps[0].grid
    lam = float(cols["t"][1] - cols["t"][0]) if cols["t"].size > 1 else 0.0
    n = cols["t"].size
    traj = Trajectory(
        grid=grid, lam=lam, eps=float(np.sqrt(lam)) if lam > 0 else 1e-2,
        times=cols["t"], mass=cols["mass"], min_u=cols["min_u"],
        max_u=cols["max_u"], l2=cols["l2"], h1_energy=cols["h1_energy"],
        entropy=cols["entropy"],
        iterations=cols["resolvent_iters"], residual=cols["residual"],
        energy_defect=np.full(n, np.nan))
    traj.snapshot_times = times
    traj.snapshots = snaps
    return traj


def cmd_validate(args) -> int:
    from .validation import battery_table, run_battery
    results = run_battery(negative_control=args.negative_control,
                          quick=args.quick)
    print(battery_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER


def cmd_kernels(args) -> int:
    run, out_dir = _load_run(args)
    k = sample_kernel(run.kernel, run.grid)
    write_snapshot(k, out_dir / "kernel.nfpe")
    eps = run.kernel.eps_cut or run.evolution.eps_effective
    write_snapshot(solver_kernel(run.kernel, eps, run.grid),
                   out_dir / "kernel_solver.nfpe")
    est = gamma_estimate(run.kernel, run.grid)
    report = validate_hypotheses(run.spec, run.kernel, run.grid)
    lines = [
        f"kernel = {run.kernel.kind}",
        f"gamma estimate at n = {run.grid.n}: {est.value:.12g}",
        f"gamma estimate at n = {2 * run.grid.n}: {est.refined:.12g}",
        f"error bar: {est.error_bar:.12g}",
        f"diverged under refinement: {est.diverged}",
        f"gamma constant: {est.constant}",
    ]
    write_text("\n".join(lines) + "\n" + report.to_text() + "\n",
               out_dir / "kernel_report.txt")
    print("\n".join(lines))
    print(report.to_text())
    return EXIT_OK if (report.ok and not est.diverged) else EXIT_HYPOTHESIS


def cmd_report(args) -> int:
    from .report import render_run
    written = render_run(args.run_dir)
    for path in written:
        print(path)
    if not written:
        print("no renderable outputs found", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    os.environ.setdefault("OMP_NUM_THREADS", str(_threads(args)))
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "particles":
            return cmd_particles(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "kernels":
            return cmd_kernels(args)
        if args.command == "report":
            return cmd_report(args)
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInputError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
