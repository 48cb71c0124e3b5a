import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from gcimmersion.cli import list_metrics, main
from gcimmersion.config import bundled_configs, load_config, parse_config

SMALL = ["--grid", "32x32"]


def _run(args, **kw):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kw)


def _manifest(d):
    return yaml.safe_load((d / "manifest.yaml").read_text())


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


@pytest.fixture(scope="module")
def catenoid_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "cat"
    # 64 space-like cells: coarser grids put the trapezoid floor of the weak residual near 1e-5
    res = _run(["run", "--config", "catenoid_constant", "--out", str(out), "--grid", "64x128"])
    return res, out


def test_catenoid_run(catenoid_run):
    res, out = catenoid_run
    assert res.exit_code == 0, res.output
    m = _manifest(out)
    assert m["status"] == "ok"
    for member in m["stages"]["verify"]["members"]:
        assert member["weak_form"]["max_residual"] < 1e-6
        assert member["constraint_max"] < 1e-12
    assert m["stages"]["reconstruct"]["defect_max"] < 1e-4  # coarse grid; rates are tested in test_reconstruct
    for a in m["artifacts"]:
        assert (out / a).is_file()


def test_verify_and_reconstruct_subcommands(catenoid_run):
    _, out = catenoid_run
    r = _run(["verify", str(out)])
    assert r.exit_code == 0 and "weak" in r.output
    assert (out / "verify.yaml").is_file()
    r = _run(["reconstruct", str(out)])
    assert r.exit_code == 0 and "first-form" in r.output


def test_config_round_trip(catenoid_run):
    _, out = catenoid_run
    saved = yaml.safe_load((out / "config.yaml").read_text())
    again = parse_config(saved, out)
    assert again.to_dict() == saved
    assert saved["solver"]["n_space"] == 64 and saved["solver"]["n_out"] == 128


def test_determinism(tmp_path):
    outs = []
    for k in range(2):
        o = tmp_path / f"r{k}"
        assert _run(["run", "--config", "catenoid_constant", "--out", str(o)] + SMALL).exit_code == 0
        outs.append(o)
    for name in ("manifest.yaml", "surface.obj", "verify.csv", "surface.obj.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_alpha_not_below_beta(tmp_path):
    p = _write(tmp_path, {"metric": {"family": "helicoid", "params": {"lambda": 1}},
                          "solver": {"alpha": 1.5, "beta": "sqrt(2)"}})
    r = _run(["run", "--config", p, "--out", str(tmp_path / "o")])
    assert r.exit_code == 2 and "alpha" in r.output
    assert not (tmp_path / "o").exists()


def test_nonnegative_curvature_rejected(tmp_path):
    csv = tmp_path / "flat.csv"
    csv.write_text("x,E\n" + "".join(f"{x},1.0\n" for x in np.linspace(-2, 6, 17)))
    p = _write(tmp_path, {"metric": {"family": "custom", "params": {"path": "flat.csv"}},
                          "solver": {"t0": 0, "length": 1}})
    r = _run(["run", "--config", p, "--out", str(tmp_path / "o")])
    assert r.exit_code == 2
    assert "negative" in r.output


def test_sweep_needs_two_values(tmp_path):
    r = _run(["sweep", "--config", "catenoid_constant", "--eps", "0.1", "--out", str(tmp_path / "o")] + SMALL)
    assert r.exit_code == 2


def test_list_metrics():
    r = _run(["list-metrics"])
    assert r.exit_code == 0
    listed = yaml.safe_load(r.output)
    assert set(listed) == {"catenoid", "custom", "helicoid-isothermal", "torus-isothermal"}
    assert listed == list_metrics()
    assert "lambda" in listed["helicoid-isothermal"]["params"]


def test_bundled_configs_load():
    names = bundled_configs()
    assert {"catenoid_constant", "helicoid_perturbed", "helicoid_whole_plane"} <= set(names)
    for n in names:
        load_config(n)


def test_whole_plane_constant_state(tmp_path):
    p = _write(tmp_path, {"name": "wp", "metric": {"family": "helicoid", "params": {"lambda": 1}},
                          "solver": {"t0": 0, "length": 0.5, "n_space": 32, "n_out": 16, "eps": 0.05},
                          "data": {"kind": "constant", "q": "sqrt(2)", "theta": 0}})
    out = tmp_path / "o"
    r = _run(["whole-plane", "--config", p, "--out", str(out)])
    assert r.exit_code == 0, r.output
    m = _manifest(out)
    assert m["stages"]["glue"]["data_line_mismatch"] < 1e-12
    assert (out / "glued.csv").is_file()


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GCIMMERSION_OUT", str(tmp_path / "env"))
    monkeypatch.chdir(tmp_path)
    r = _run(["run", "--config", "catenoid_constant", "--eps", "0.1"] + SMALL)
    assert r.exit_code == 0
    assert (tmp_path / "env" / "catenoid_constant" / "manifest.yaml").is_file()
    assert not (tmp_path / "runs").exists()
