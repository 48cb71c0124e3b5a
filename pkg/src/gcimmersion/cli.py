"""Command-line front end: metric -> data -> march/sweep -> verify -> reconstruct, with artifacts on disk."""

import functools
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from . import io as gio
from . import reconstruct as rec
from . import verify as ver
from ._accel import active_backend
from .config import RunConfig, load_config, parse_config, parse_grid
from .errors import GCError, SweepError
from .fluid import SecondForm
from .metric import CATALOG, Metric
from .solver import (
    RiemannState,
    Trajectory,
    constant_row,
    energy_diagnostics,
    epsilon_sweep,
    mollify_initial_data,
    random_mode_perturbation,
)

OUT_ENV = "GCIMMERSION_OUT"


# ---------------------------------------------------------------------------
# Stages


def prepare_data(cfg: RunConfig, region=None) -> RiemannState:
    """Initial row on the solver grid, checked against the diamond region."""
    sc = cfg.solver
    region = sc.region() if region is None else region
    d = cfg.data
    if d["kind"] == "constant":
        row = constant_row(d["q"], d["theta"], sc.n_space)
    elif d["kind"] == "perturbation":
        rng = np.random.default_rng(cfg.seed)
        row = random_mode_perturbation(region, sc.n_space, rng, modes=d["modes"], amplitude=d["amplitude"],
                                       kmax=d["kmax"])
    else:
        tab = np.genfromtxt(d["path"], delimiter=",", names=True)
        row = mollify_initial_data(tab["s"], tab["q"], tab["theta"], sc.period, d["width"], sc.n_space, region,
                                   sc.s0)
    if not np.all(region.contains_invariants(row.Wp, row.Wm, sc.region_pad)):
        raise GCError(f"initial data leave the diamond region by {region.breach(row.Wp, row.Wm):.3e}")
    return row


def strip_family(traj: Trajectory, vcfg):
    x, y = traj.xy()
    return ver.lattice_family((x.min(), x.max()), (y.min(), y.max()), n=vcfg.get("n", 5),
                              scales=tuple(vcfg.get("scales", [1.0])))


def verify_trajectory(traj: Trajectory, metric: Metric, vcfg, form: SecondForm = None):
    """Weak residuals, constraint residuals (pointwise and window-averaged), energy and sup-norms."""
    form = traj.second_form(metric) if form is None else form
    wf = ver.weak_form_residual(form, traj.t, traj.s, traj.config.orientation, metric, strip_family(traj, vcfg))
    x, y = traj.xy()
    kappa = metric.evaluate(x, y).kappa
    cmax, crms, gmax, grms = ver.constraint_residual(form, kappa)
    avg = ver.weak_star_average(form, vcfg.get("window", traj.config.period / 16), traj.config.ds, traj.t)
    energy = energy_diagnostics(traj, metric)
    return {
        "eps": traj.eps,
        "weak_form": wf.summary(),
        "constraint_max": cmax,
        "constraint_rms": crms,
        "gauss_max": gmax,
        "gauss_rms": grms,
        "averaged_constraint_max": avg.after[0],
        "energy": energy.as_dict(),
        "sup_norms": {k: float(np.max(np.abs(a))) for k, a in (("L", form.L), ("M", form.M), ("N", form.N))},
        "march": {
            "steps": traj.steps, "retries": traj.retries, "breach_events": traj.breach_events,
            "max_breach": traj.max_breach, "min_dtau": traj.min_dtau, "max_drift": traj.max_drift(),
            "complete": traj.complete, "backend": traj.backend,
        },
    }


def reconstruct_field(metric: Metric, form: SecondForm, t, s, orientation, rcfg, out_dir=None, name="surface"):
    """Integrate frames and positions, check the first form, optionally export the mesh."""
    T, S = np.meshgrid(t, s, indexing="ij")
    x, y = (T, S) if orientation == "x" else (S, T)
    h = rec.unscale_second_form(form, metric, x=x, y=y)
    base = tuple(rcfg.get("base_index", (0, 0)))
    patch = rec.integrate_frame(metric, *h, t, s, orientation, base_index=base,
                                defect_stride=rcfg.get("defect_stride", 16))
    rec.integrate_position(patch, base_index=base)
    fmax, frms, ferr = rec.first_form_error(patch, metric)
    K = rec.angle_defect_curvature(patch.r)
    kap = metric.evaluate(x, y, strict=False).kappa
    m = np.isfinite(K)
    info = {
        "first_form_max": fmax,
        "first_form_rms": frms,
        "gram_error": rec.gram_error(patch, metric),
        "defect_max": patch.max_defect,
        "defect_stride": patch.defect_stride,
        "normal_drift": patch.normal_drift,
        "angle_defect_rel_l2": float(np.sqrt(np.sum((K[m] - kap[m]) ** 2) / np.sum(kap[m] ** 2))) if m.any() else None,
        "grid": [int(t.size), int(s.size)],
    }
    if out_dir is not None:
        path = Path(out_dir) / f"{name}.obj"
        rec.export_mesh(patch, path, name=name, first_form=ferr)
        info["mesh"] = path.name
    return patch, info


def _base_manifest(cfg: RunConfig, kind):
    return {
        "kind": kind,
        "name": cfg.name,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "backend": active_backend(),
        "config": cfg.to_dict(),
        "status": "running",
        "stages": {},
        "artifacts": [],
    }


def _finish(manifest, out, status, error=None, stage=None):
    manifest["status"] = status
    if error is not None:
        manifest["error"] = {"stage": stage, "type": type(error).__name__, "message": str(error)}
    gio.write_manifest(Path(out) / "manifest.yaml", manifest)
    return 0 if status == "ok" else 1


def _member_dir(i, eps):
    return f"member_{i:02d}_eps_{eps:.6g}"


def _write_member(out, i, traj, form, manifest, snapshots):
    d = Path(out) / _member_dir(i, traj.eps)
    gio.save_trajectory(d / "trajectory.npz", traj)
    names = gio.write_snapshots(d, traj, form, snapshots)
    manifest["artifacts"] += [f"{d.name}/trajectory.npz"] + [f"{d.name}/{n}" for n in names]


def run_pipeline(cfg: RunConfig, out, backend=None, snapshots=9):
    """Execute a full run; returns ``(exit_code, manifest)``. Partial artifacts survive a failing stage."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _base_manifest(cfg, "run")
    gio.atomic_write_text(out / "config.yaml", gio.dump_yaml(cfg.to_dict()))
    stage = "metric"
    try:
        metric = cfg.build_metric()
        manifest["stages"]["metric"] = {"family": metric.family, "params": dict(metric.params)}
        stage = "data"
        initial = prepare_data(cfg)
        stage = "march"
        try:
            sweep = epsilon_sweep(cfg.solver, metric, initial, cfg.eps_list, window=cfg.verify["window"],
                                  backend=backend)
        except SweepError as exc:
            for i, m in enumerate(exc.partial):
                _write_member(out, i, m.trajectory, m.second_form, manifest, snapshots)
            raise
        for i, m in enumerate(sweep.members):
            _write_member(out, i, m.trajectory, m.second_form, manifest, snapshots)
        manifest["stages"]["march"] = {"members": len(sweep.members), "weak_distances": sweep.weak_distances}
        stage = "verify"
        reports = [verify_trajectory(m.trajectory, metric, cfg.verify, m.second_form) for m in sweep.members]
        manifest["stages"]["verify"] = {"members": reports}
        if len(sweep.members) > 1:
            cr = ver.compactness_report(sweep, cfg.verify["window"])
            manifest["stages"]["verify"]["compactness"] = {
                "energy_ratio": cr.energy_ratio, "energy_slope": cr.energy_slope, "sup_variation": cr.sup_variation,
                "weak_distances_nonincreasing": sweep.trend_nonincreasing(0.1),
            }
            gio.write_table(out / "compactness.csv",
                            ("eps", "sup_L", "sup_M", "sup_N", "energy", "avg_constraint"),
                            [(r["eps"], r["sup_L"], r["sup_M"], r["sup_N"], r["energy"], r["avg_constraint"])
                             for r in cr.rows()])
            manifest["artifacts"].append("compactness.csv")
        gio.write_table(out / "verify.csv",
                        ("eps", "weak_max", "weak_relative", "constraint_max", "averaged_constraint", "energy",
                         "bound", "breach_events"),
                        [(r["eps"], r["weak_form"]["max_residual"], r["weak_form"]["relative"], r["constraint_max"],
                          r["averaged_constraint_max"], r["energy"]["energy"], r["energy"]["bound"],
                          float(r["march"]["breach_events"])) for r in reports])
        manifest["artifacts"].append("verify.csv")
        if cfg.reconstruct.get("enabled"):
            stage = "reconstruct"
            m = sweep.members[-1]
            _, info = reconstruct_field(metric, m.second_form, m.trajectory.t, m.trajectory.s,
                                        cfg.solver.orientation, cfg.reconstruct, out)
            manifest["stages"]["reconstruct"] = info
            manifest["artifacts"] += [info["mesh"], info["mesh"] + ".csv"]
    except GCError as exc:
        return _finish(manifest, out, "failed", exc, stage), manifest
    manifest["artifacts"].sort()
    return _finish(manifest, out, "ok"), manifest


def _backward_data(row: RiemannState, fwd_region, bwd_region):
    """Shift theta by the difference of the region centres; the second form is unchanged."""
    shift = bwd_region.center - fwd_region.center
    return RiemannState(row.Wp + shift, row.Wm + shift)


def glue(fwd: Trajectory, bwd: Trajectory, metric: Metric):
    """Concatenate a backward and a forward half along the shared data line (ascending t)."""
    ff, fb = fwd.second_form(metric), bwd.second_form(metric)
    t = np.concatenate([bwd.t[::-1], fwd.t[1:]])
    form = SecondForm(*(np.concatenate([b[::-1], f[1:]], axis=0) for f, b in
                        ((ff.Lt, fb.Lt), (ff.Mt, fb.Mt), (ff.Nt, fb.Nt))),
                      gamma=np.concatenate([fb.gamma[::-1], ff.gamma[1:]], axis=0),
                      sqrt_det=np.concatenate([fb.sqrt_det[::-1], ff.sqrt_det[1:]], axis=0))
    mismatch = max(float(np.max(np.abs(a[0] - b[0]))) for a, b in ((ff.Lt, fb.Lt), (ff.Mt, fb.Mt), (ff.Nt, fb.Nt)))
    return t, form, mismatch, bwd.t.size - 1


def whole_plane_pipeline(cfg: RunConfig, out, backend=None, snapshots=9):
    """Forward and backward marches from one data line, verified separately and glued."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _base_manifest(cfg, "whole-plane")
    gio.atomic_write_text(out / "config.yaml", gio.dump_yaml(cfg.to_dict()))
    stage = "metric"
    try:
        metric = cfg.build_metric()
        sc_f = cfg.solver if cfg.solver.direction == 1 else _with(cfg.solver, direction=1)
        sc_b = _with(sc_f, direction=-1)
        stage = "data"
        row_f = prepare_data(_with_solver(cfg, sc_f), sc_f.region())
        row_b = _backward_data(row_f, sc_f.region(), sc_b.region())
        halves = {}
        for label, sc, row in (("forward", sc_f, row_f), ("backward", sc_b, row_b)):
            stage = f"march-{label}"
            sweep = epsilon_sweep(sc, metric, row, cfg.eps_list, window=cfg.verify["window"], backend=backend)
            halves[label] = sweep
            for i, m in enumerate(sweep.members):
                d = out / label / _member_dir(i, m.eps)
                gio.save_trajectory(d / "trajectory.npz", m.trajectory)
                names = gio.write_snapshots(d, m.trajectory, m.second_form, snapshots)
                manifest["artifacts"] += [f"{label}/{d.name}/trajectory.npz"] + [f"{label}/{d.name}/{n}" for n in names]
            stage = f"verify-{label}"
            manifest["stages"][label] = {
                "members": [verify_trajectory(m.trajectory, metric, cfg.verify, m.second_form) for m in sweep.members],
                "weak_distances": sweep.weak_distances,
            }
        stage = "glue"
        fwd, bwd = halves["forward"].members[-1], halves["backward"].members[-1]
        t, form, mismatch, i_data = glue(fwd.trajectory, bwd.trajectory, metric)
        manifest["stages"]["glue"] = {"data_line_mismatch": mismatch, "data_line_index": i_data,
                                      "t_range": [float(t[0]), float(t[-1])]}
        lines = [",".join(gio.SNAPSHOT_COLUMNS[:2] + ("Lt", "Mt", "Nt"))]
        for k in gio.snapshot_rows(t.size, 2 * snapshots - 1):
            for j in range(form.Lt.shape[1]):
                lines.append(",".join("%.17g" % v for v in (t[k], fwd.trajectory.s[j], form.Lt[k, j], form.Mt[k, j],
                                                             form.Nt[k, j])))
        gio.atomic_write_text(out / "glued.csv", "\n".join(lines) + "\n")
        manifest["artifacts"].append("glued.csv")
        if cfg.reconstruct.get("enabled"):
            stage = "reconstruct"
            rcfg = dict(cfg.reconstruct)
            rcfg["base_index"] = [i_data, rcfg.get("base_index", [0, 0])[1]]
            _, info = reconstruct_field(metric, form, t, fwd.trajectory.s, sc_f.orientation, rcfg, out, "whole_plane")
            manifest["stages"]["reconstruct"] = info
            manifest["artifacts"] += [info["mesh"], info["mesh"] + ".csv"]
    except GCError as exc:
        return _finish(manifest, out, "failed", exc, stage), manifest
    manifest["artifacts"].sort()
    return _finish(manifest, out, "ok"), manifest


def _with(sc, **kw):
    d = sc.to_dict()
    d.update(kw)
    d["eps_sweep"] = tuple(d["eps_sweep"])
    return type(sc)(**d)


def _with_solver(cfg: RunConfig, sc):
    return RunConfig(cfg.metric, sc, cfg.data, cfg.verify, cfg.reconstruct, cfg.output, cfg.seed, cfg.name, cfg.source)


def load_run(run_dir):
    """Config and trajectories of a previous run directory (members in sweep order)."""
    run_dir = Path(run_dir)
    with open(run_dir / "config.yaml", encoding="utf-8") as fh:
        cfg = parse_config(yaml.safe_load(fh), run_dir)
    trajs = [gio.load_trajectory(p) for p in sorted(run_dir.glob("member_*/trajectory.npz"))]
    if not trajs:
        raise GCError(f"no trajectories under {run_dir}")
    return cfg, trajs


def list_metrics():
    """Deterministic catalog listing."""
    return {name: {"params": dict(entry["params"]), "note": entry["note"]} for name, entry in sorted(CATALOG.items())}


def resolve_out(cfg: RunConfig, out):
    if out:
        return Path(out)
    if cfg.output:
        return Path(cfg.output)
    root = os.environ.get(OUT_ENV)
    return Path(root or "runs") / cfg.name


# ---------------------------------------------------------------------------
# click wiring


def _common(f):
    f = click.option("--grid", default=None, help="Space-like cells and output rows, e.g. 256x512.")(f)
    f = click.option("--eps", default=None, help="Comma list of viscosities (overrides the sweep).")(f)
    f = click.option("--seed", default=None, type=click.IntRange(0, 2**64 - 1), help="Perturbation seed.")(f)
    f = click.option("--out", default=None, type=click.Path(file_okay=False),
                     help=f"Output directory (default: config output, then ${OUT_ENV}/<name>, then runs/<name>).")(f)
    f = click.option("--config", "config_path", required=True, help="YAML config path or bundled config name.")(f)
    return f


def _load(config_path, seed, eps, grid, out):
    overrides = {"seed": seed}
    if eps:
        overrides["eps"] = [float(e) for e in eps.split(",") if e.strip()]
    if grid:
        overrides["grid"] = parse_grid(grid)
    cfg = load_config(config_path, overrides)
    return cfg, resolve_out(cfg, out)


def _report(code, manifest, out):
    status = manifest.get("status")
    click.echo(f"{manifest['kind']} {manifest['name']}: {status} -> {out}")
    if "error" in manifest:
        e = manifest["error"]
        click.echo(f"  stage {e['stage']} failed: {e['type']}: {e['message']}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def main():
    """Viscous marching for the Gauss-Codazzi system of negatively curved metrics."""


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except GCError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


@main.command("run")
@_common
@_guard
def run_cmd(config_path, seed, eps, grid, out):
    """March (or sweep), verify and optionally reconstruct."""
    cfg, out = _load(config_path, seed, eps, grid, out)
    code, manifest = run_pipeline(cfg, out)
    _report(code, manifest, out)


@main.command("sweep")
@_common
@_guard
def sweep_cmd(config_path, seed, eps, grid, out):
    """Run the configured viscosity sweep (needs at least two values)."""
    cfg, out = _load(config_path, seed, eps, grid, out)
    if len(cfg.eps_list) < 2:
        raise GCError("sweep needs at least two viscosities (solver.eps_sweep or --eps)")
    code, manifest = run_pipeline(cfg, out)
    _report(code, manifest, out)


@main.command("whole-plane")
@_common
@_guard
def whole_plane_cmd(config_path, seed, eps, grid, out):
    """Forward and backward half-strips from the same data line, glued."""
    cfg, out = _load(config_path, seed, eps, grid, out)
    code, manifest = whole_plane_pipeline(cfg, out)
    _report(code, manifest, out)


@main.command("verify")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@_guard
def verify_cmd(run_dir):
    """Recompute verification reports from a previous run directory."""
    cfg, trajs = load_run(run_dir)
    metric = cfg.build_metric()
    reports = [verify_trajectory(tr, metric, cfg.verify) for tr in trajs]
    gio.write_manifest(Path(run_dir) / "verify.yaml", {"members": reports})
    for r in reports:
        click.echo("eps %.6g  weak %.3e (rel %.3e)  averaged constraint %.3e  energy %.4e / bound %.4e" % (
            r["eps"], r["weak_form"]["max_residual"], r["weak_form"]["relative"], r["averaged_constraint_max"],
            r["energy"]["energy"], r["energy"]["bound"]))


@main.command("reconstruct")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@_guard
def reconstruct_cmd(run_dir):
    """Integrate the surface of the finest-viscosity member of a previous run."""
    cfg, trajs = load_run(run_dir)
    metric = cfg.build_metric()
    tr = trajs[-1]
    _, info = reconstruct_field(metric, tr.second_form(metric), tr.t, tr.s, tr.config.orientation,
                                cfg.reconstruct, run_dir)
    gio.write_manifest(Path(run_dir) / "reconstruct.yaml", info)
    click.echo("mesh %s  first-form max %.3e  defect %.3e" % (info["mesh"], info["first_form_max"], info["defect_max"]))


@main.command("list-metrics")
def list_metrics_cmd():
    """Metric catalog with parameter schemas."""
    click.echo(gio.dump_yaml(list_metrics()), nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
