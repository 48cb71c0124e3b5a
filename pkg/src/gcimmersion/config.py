"""Run configuration: YAML loading, arithmetic in numeric fields, validation and normalisation."""

import ast
import copy
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from .errors import ConfigError, GCError
from .metric import CATALOG, Metric, make_metric, periodicize_metric
from .solver import SolverConfig

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "cosh": math.cosh, "sinh": math.sinh, "log": math.log, "exp": math.exp}


def eval_number(value):
    """Evaluate a number or a small arithmetic string such as ``"2*pi"`` or ``"sqrt(2)"``."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a number, got {value!r}")
    try:
        tree = ast.parse(value.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse numeric expression {value!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ConfigError(f"unsupported element in numeric expression {value!r}")

    try:
        return float(ev(tree))
    except (ArithmeticError, ValueError) as exc:
        raise ConfigError(f"cannot evaluate {value!r}: {exc}") from exc


_FAMILY_ALIASES = {"helicoid": "helicoid-isothermal", "torus": "torus-isothermal"}
_SOLVER_FLOATS = ("t0", "length", "period", "s0", "eps", "alpha", "beta", "safety", "region_pad", "min_step",
                  "periodic_tol")
_SOLVER_INTS = ("direction", "n_space", "n_out", "max_steps")
DATA_KINDS = ("constant", "perturbation", "file")


@dataclass
class RunConfig:
    """Validated configuration of one run; ``raw`` holds the normalised mapping."""

    metric: Dict[str, Any]
    solver: SolverConfig
    data: Dict[str, Any]
    verify: Dict[str, Any] = field(default_factory=dict)
    reconstruct: Dict[str, Any] = field(default_factory=dict)
    output: Optional[str] = None
    seed: int = 0
    name: str = "run"
    source: Optional[str] = None

    def build_metric(self) -> Metric:
        m = make_metric(self.metric["family"], **self.metric.get("params", {}))
        if self.metric.get("periodicize"):
            m = periodicize_metric(m, self.solver.period, self.solver.beta)
        return m

    @property
    def eps_list(self):
        sw = list(self.solver.eps_sweep)
        return sw if sw else [self.solver.eps]

    def to_dict(self):
        """Normalised mapping; loading it again reproduces this configuration."""
        return {
            "name": self.name,
            "seed": int(self.seed),
            "output": self.output,
            "metric": copy.deepcopy(self.metric),
            "solver": self.solver.to_dict(),
            "data": copy.deepcopy(self.data),
            "verify": copy.deepcopy(self.verify),
            "reconstruct": copy.deepcopy(self.reconstruct),
        }


def _numbers(d, keys, conv):
    for k in keys:
        if k in d and d[k] is not None:
            d[k] = conv(d[k])


def _as_int(v):
    f = eval_number(v)
    if f != int(f):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(f)


def parse_config(raw: Dict[str, Any], base_dir: Optional[Path] = None, source=None) -> RunConfig:
    """Validate a config mapping; every check runs before any computation."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - {"name", "seed", "output", "metric", "solver", "data", "verify", "reconstruct"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    base_dir = Path(base_dir) if base_dir else Path.cwd()

    metric = dict(raw.get("metric") or {})
    fam = _FAMILY_ALIASES.get(metric.get("family"), metric.get("family"))
    if fam not in CATALOG:
        raise ConfigError(f"metric.family must be one of {sorted(CATALOG)}, got {metric.get('family')!r}")
    params = dict(metric.get("params") or {})
    for k, v in list(params.items()):
        if k == "path":
            p = Path(v)
            params[k] = str(p if p.is_absolute() else (base_dir / p))
            if not Path(params[k]).is_file():
                raise ConfigError(f"metric file {params[k]} does not exist")
        elif k != "variant":
            params[k] = eval_number(v)
    metric = {"family": fam, "params": params, "periodicize": bool(metric.get("periodicize", False))}

    s = dict(raw.get("solver") or {})
    _numbers(s, _SOLVER_FLOATS, eval_number)
    _numbers(s, _SOLVER_INTS, _as_int)
    if "eps_sweep" in s:
        s["eps_sweep"] = tuple(eval_number(e) for e in (s["eps_sweep"] or ()))
    if "beta" not in s and "beta" in params:
        s["beta"] = params["beta"]
    try:
        solver = SolverConfig(**s)
    except TypeError as exc:
        raise ConfigError(f"bad solver section: {exc}") from exc

    data = dict(raw.get("data") or {"kind": "constant"})
    kind = data.get("kind", "constant")
    if kind not in DATA_KINDS:
        raise ConfigError(f"data.kind must be one of {DATA_KINDS}")
    data["kind"] = kind
    if kind == "constant":
        data["q"] = eval_number(data.get("q", solver.beta))
        data["theta"] = eval_number(data.get("theta", 0.0))
    elif kind == "perturbation":
        data["modes"] = _as_int(data.get("modes", 3))
        data["amplitude"] = eval_number(data.get("amplitude", 0.25))
        data["kmax"] = _as_int(data.get("kmax", 16))
        if data["modes"] < 1 or data["kmax"] < data["modes"]:
            raise ConfigError("perturbation needs 1 <= modes <= kmax")
        if not 0 <= data["amplitude"] < 0.5:
            raise ConfigError("perturbation amplitude must lie in [0, 0.5) of the W+ extent to stay in the region")
    else:
        if "path" not in data:
            raise ConfigError("data.kind = file needs a path")
        p = Path(data["path"])
        data["path"] = str(p if p.is_absolute() else base_dir / p)
        if not Path(data["path"]).is_file():
            raise ConfigError(f"data file {data['path']} does not exist")
        data["width"] = eval_number(data.get("width", solver.period / 64))

    verify = dict(raw.get("verify") or {})
    verify["n"] = _as_int(verify.get("n", 5))
    verify["scales"] = [eval_number(x) for x in verify.get("scales", [1.0])]
    verify["window"] = eval_number(verify.get("window", solver.period / 16))

    rec = dict(raw.get("reconstruct") or {})
    rec["enabled"] = bool(rec.get("enabled", False))
    rec["base_index"] = [int(i) for i in rec.get("base_index", [0, 0])]
    rec["defect_stride"] = _as_int(rec.get("defect_stride", 16))

    seed = _as_int(raw.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be in [0, 2^64)")
    cfg = RunConfig(metric, solver, data, verify, rec, raw.get("output"), seed, str(raw.get("name", "run")), source)
    _check_metric(cfg)
    return cfg


def _check_metric(cfg: RunConfig):
    """Build the metric and check negative curvature on the marched strip."""
    try:
        metric = cfg.build_metric()
    except GCError as exc:
        raise ConfigError(f"metric: {exc}") from exc
    sc = cfg.solver
    t = np.linspace(sc.t0, sc.t_end, 9)
    s = sc.s_grid
    T, S = np.meshgrid(t, s, indexing="ij")
    x, y = (T, S) if sc.orientation == "x" else (S, T)
    try:
        metric.evaluate(x, y, strict=True)
    except GCError as exc:
        raise ConfigError(f"metric must have strictly negative Gauss curvature on the strip: {exc}") from exc


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Read YAML (bundled names accepted without extension) and apply CLI overrides."""
    p = resolve_config_path(path)
    with open(p, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if overrides:
        raw = apply_overrides(raw, overrides)
    return parse_config(raw, p.parent, str(p))


def apply_overrides(raw, overrides):
    raw = copy.deepcopy(raw)
    solver = raw.setdefault("solver", {}) or {}
    raw["solver"] = solver
    if overrides.get("seed") is not None:
        raw["seed"] = int(overrides["seed"])
    if overrides.get("eps"):
        eps = [float(e) for e in overrides["eps"]]
        solver["eps"] = eps[0]
        solver["eps_sweep"] = eps if len(eps) > 1 else []
    if overrides.get("grid"):
        ns, nt = overrides["grid"]
        solver["n_space"], solver["n_out"] = int(ns), int(nt)
    if overrides.get("output"):
        raw["output"] = overrides["output"]
    return raw


def bundled_configs():
    d = Path(__file__).with_name("configs")
    return sorted(p.stem for p in d.glob("*.yaml"))


def resolve_config_path(path) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    bundled = Path(__file__).with_name("configs") / (p.name if p.suffix else p.name + ".yaml")
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config {path} not found (bundled: {', '.join(bundled_configs())})")


def parse_grid(text):
    """``"256x512"`` -> ``(256, 512)`` (space-like cells, output rows)."""
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigError(f"--grid expects NsxNt, got {text!r}") from exc
