"""Run-directory output: CSV writers and snapshot management.

CSV is RFC-4180 style with '.' decimals and 17 significant digits, so a
re-run at fixed thread count reproduces the files byte for byte.  No
timestamps or host details enter any output.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .fields import Field, write_snapshot
from .semigroup import Trajectory

MONITOR_COLUMNS = ("t", "mass", "min_u", "max_u", "l2", "h1_energy",
                   "entropy", "resolvent_iters", "residual")

PARTICLE_MONITOR_COLUMNS = ("t", "kde_mass", "kde_min_u", "kde_max_u",
                            "hm1_distance_to_pde", "clamp_fraction")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if np.isnan(xf):
        return "nan"
    return format(xf, ".17g")


def write_monitors_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MONITOR_COLUMNS)
        for i, t in enumerate(traj.times):
            iters = traj.iterations[i]
            w.writerow([
                fmt(t), fmt(traj.mass[i]), fmt(traj.min_u[i]),
                fmt(traj.max_u[i]), fmt(traj.l2[i]), fmt(traj.h1_energy[i]),
                fmt(traj.entropy[i]),
                "" if np.isnan(iters) else str(int(iters)),
                fmt(traj.residual[i])])


def read_monitors_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        vals = [row[j] if row[j] != "" else "nan" for row in data]
        out[name] = np.array([float(v) for v in vals])
    return out


def write_snapshots(traj: Trajectory, run_dir) -> None:
    snap_dir = Path(run_dir) / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    with open(snap_dir / "index.csv", "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("index", "t", "file"))
        for i, (t, snap) in enumerate(zip(traj.snapshot_times,
                                          traj.snapshots)):
            name = f"snap_{i:06d}.nfpe"
            write_snapshot(snap, snap_dir / name)
            w.writerow((str(i), fmt(t), name))


def read_snapshots(run_dir) -> tuple[list[float], list[Field]]:
    from .fields import read_snapshot
    snap_dir = Path(run_dir) / "snapshots"
    times, fields = [], []
    with open(snap_dir / "index.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        times.append(float(row[1]))
        fields.append(read_snapshot(snap_dir / row[2]))
    return times, fields


def write_h_eps_csv(probe_report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "eps", "h_eps", "bound_C_sqrt_eps_exp_Ct"))
        for (eps, times, vals), fit in zip(probe_report.series,
                                           probe_report.fits):
            bounds = fit.bound(np.asarray(times))
            for t, h, b in zip(times, vals, bounds):
                w.writerow((fmt(t), fmt(eps), fmt(h), fmt(b)))


def write_particles_csv(result, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        dim = result.ensembles[0].dim
        w.writerow(("t", "particle_id") + tuple(f"x{a + 1}"
                                                for a in range(dim)))
        for t, ens in zip(result.times, result.ensembles):
            for pid in range(ens.count):
                w.writerow((fmt(t), str(pid)) + tuple(
                    fmt(ens.positions[pid, a]) for a in range(dim)))


def write_particle_monitors_csv(result, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PARTICLE_MONITOR_COLUMNS)
        for t, kde, dist in zip(result.times, result.kdes,
                                result.hm1_distances):
            w.writerow((fmt(t), fmt(kde.mass()),
                        fmt(float(kde.values.min())),
                        fmt(float(kde.values.max())),
                        fmt(dist), fmt(result.clamp_fraction)))


def write_text(text: str, path) -> None:
    Path(path).write_text(text, encoding="utf-8")
