"""Artifact writing: snapshot tables, trajectory archives and the run manifest.

All numbers are written with ``%.17g`` (round-trip exact, locale independent).
Manifests carry no timestamps, so identical inputs give identical bytes.
"""

import os
import tempfile
from pathlib import Path

import numpy as np
import yaml

from .fluid import SecondForm
from .solver import SolverConfig, Trajectory

SNAPSHOT_COLUMNS = ("t", "s", "q", "theta", "Wp", "Wm", "Lt", "Mt", "Nt", "L", "M", "N")


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def plain(obj):
    """Convert numpy scalars/arrays and tuples into YAML-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dump_yaml(data):
    return yaml.safe_dump(plain(data), sort_keys=True, default_flow_style=False, width=100)


def write_manifest(path, data):
    atomic_write_text(path, dump_yaml(data))


def snapshot_rows(n_rows, count):
    """Evenly spaced row indices including both ends."""
    count = max(2, min(count, n_rows))
    return sorted(set(np.linspace(0, n_rows - 1, count).round().astype(int).tolist()))


def snapshot_table(traj: Trajectory, form: SecondForm, k):
    q, theta = traj.fluid().q[k], traj.fluid().theta[k]
    cols = (np.full(traj.s.size, traj.t[k]), traj.s, q, theta, traj.Wp[k], traj.Wm[k],
            form.Lt[k], form.Mt[k], form.Nt[k], form.L[k], form.M[k], form.N[k])
    lines = [",".join(SNAPSHOT_COLUMNS)]
    for row in zip(*cols):
        lines.append(",".join("%.17g" % v for v in row))
    return "\n".join(lines) + "\n"


def write_snapshots(directory, traj: Trajectory, form: SecondForm, count=9, prefix="snap"):
    directory = Path(directory)
    paths = []
    for k in snapshot_rows(traj.t.size, count):
        p = directory / f"{prefix}_{k:05d}.csv"
        atomic_write_text(p, snapshot_table(traj, form, k))
        paths.append(p.name)
    return paths


def save_trajectory(path, traj: Trajectory):
    """Compressed archive of the fields needed to re-run later stages."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".npz")
    os.close(fd)
    try:
        np.savez_compressed(
            tmp, t=traj.t, s=traj.s, Wp=traj.Wp, Wm=traj.Wm, integrals=traj.integrals,
            row_start=traj.row_start, row_end=traj.row_end,
            stats=np.array([traj.steps, traj.retries, traj.breach_events, traj.first_breach_t, traj.min_dtau,
                            traj.max_breach, float(traj.complete)]),
            config=np.array(dump_yaml(traj.config.to_dict())), backend=np.array(traj.backend),
        )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_trajectory(path) -> Trajectory:
    with np.load(path, allow_pickle=False) as z:
        cfg = yaml.safe_load(str(z["config"]))
        cfg["eps_sweep"] = tuple(cfg.get("eps_sweep") or ())
        st = z["stats"]
        return Trajectory(
            config=SolverConfig(**cfg), t=z["t"], s=z["s"], Wp=z["Wp"], Wm=z["Wm"], integrals=z["integrals"],
            row_start=z["row_start"], row_end=z["row_end"], steps=int(st[0]), retries=int(st[1]),
            breach_events=int(st[2]), first_breach_t=float(st[3]), min_dtau=float(st[4]), max_breach=float(st[5]),
            complete=bool(st[6]), backend=str(z["backend"]),
        )


def write_table(path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else "%.17g" % v for v in r))
    atomic_write_text(path, "\n".join(lines) + "\n")
