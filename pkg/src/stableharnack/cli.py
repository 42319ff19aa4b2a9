"""Command line front end: config ingestion, task dispatch and report emission.

Configs are INI files with three sections::

    [model]
    dimension = 2
    alpha = 1.0
    spectral = density            ; isotropic | density | atomic
    density = 1 + 0.5*cos(theta)**2
    bound = 1.5
    ; value = 1.0                 (isotropic)
    ; atoms = 1,0:1; -1,0:1       (atomic: direction:weight pairs)
    ; quadrature = 512

    [experiment]
    task = harnack
    seed = 7
    out = results/harnack

    [params]
    r = 1.0
    n_paths = 2000

Every run writes ``report.json`` (deterministic for a given config and
seed), ``manifest.json`` (config echo, model key, versions, wall time,
timestamp) and the task's CSV series into the output directory.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import glob
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .density import radial_slice_csv, unit_density_grid, verify_heat_kernel_bound
from .errors import BudgetExceeded, Inconclusive, StableHarnackError
from .green import green_profile, verify_lemma1, verify_lemma2, verify_lemma3
from .harnack import (FAMILIES, ExteriorFunction, HarnackParams, annulus_tail_decay,
                      build_exit_bank, estimate_harnack_constant, estimate_hoelder_exponent,
                      harmonic_extend, harnack_lattice, hoelder_constants, nested_lattice,
                      random_exterior, run_oscillation_iteration, signed_harnack_trials,
                      verify_weak_harnack, write_rows_csv)
from .model import Ball, SpectralMeasure, StableModel, char_exponent, sphere_quadrature
from .simulate import (DEFAULT_EPS_FRACTION, build_scheme, isotropic_exit_radius_cdf,
                       sample_exit, task_rng)

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2
THREADS_ENV = "STABLEHARNACK_THREADS"

MODEL_KEYS = {"dimension", "alpha", "spectral", "value", "density", "bound", "atoms",
              "quadrature"}
EXPERIMENT_KEYS = {"task", "seed", "out"}
GEOMETRY_KEYS = {"x0", "r", "r0", "lambda", "theta", "sigma_ratio", "a"}

# per task: allowed [params] keys and their defaults
TASK_PARAMS = {
    "symbol": {"points": None, "n_random": 16},
    "density": {"grid_n": None, "grid_l": None},
    "green": {"grid_n": None, "grid_l": None, "profile_dirs": None},
    "exit": {"r": 1.0, "start": None, "n_paths": 10000},
    "lemma1": {"x0": None, "r": 1.0, "lambda": 2.0, "a": 0.9, "z_samples": 20,
               "n_paths": 20000, "grid_n": None, "grid_l": None},
    "lemma2": {"x0": None, "r": 1.0, "theta": 2.0, "a": 0.9, "xbar_samples": 4,
               "n_paths": 20000, "grid_n": None, "grid_l": None},
    "lemma3": {"x0": None, "r": 1.0, "lambda": 1.5, "theta": 2.0, "a": 0.9, "pairs": 20,
               "delta1": None, "n_paths": 20000, "grid_n": None, "grid_l": None},
    "harnack": {"data": "ensemble", "ensemble_size": 50, "signed_trials": 20,
                "n_paths": 2000},
    "hoelder": {"c1": None, "family": "shell", "n_levels": 4, "n_paths": 2000,
                "ensemble_size": 50},
    "tail": {"k": 1, "J": 8, "n_dirs": None},
}
GEOMETRY_TASKS = {"harnack", "hoelder", "tail"}

SAFE_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
              "sqrt": np.sqrt, "abs": np.abs, "arctan2": np.arctan2}
SAFE_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Load,
              ast.Call, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
              ast.Mod)


class ConfigError(StableHarnackError, ValueError):
    pass


# ---------------------------------------------------------------------------
# parsing


def compile_density(expr: str, d: int):
    """Vectorised f(xi) from an arithmetic expression in theta, phi, x, y, z and pi.

    d=2: theta is the polar angle of xi.  d=3: theta is the polar angle
    from the z axis and phi the azimuth.
    """
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"density expression does not parse: {e.msg}") from None
    names = {"theta", "phi", "x", "y", "z", "pi"} | set(SAFE_FUNCS)
    for node in ast.walk(tree):
        if not isinstance(node, SAFE_NODES):
            raise ConfigError(f"disallowed construct in density expression: "
                              f"{type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ConfigError(f"unknown name {node.id!r} in density expression")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in SAFE_FUNCS):
            raise ConfigError("only elementary functions may be called in the density")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError("density constants must be numbers")
    code = compile(tree, "<density>", "eval")

    def f(xi):
        xi = np.asarray(xi, dtype=float)
        env = dict(SAFE_FUNCS, pi=np.pi, x=xi[:, 0], y=xi[:, 1])
        if d == 2:
            env["theta"] = np.arctan2(xi[:, 1], xi[:, 0])
            env["z"] = np.zeros(len(xi))
        else:
            env["z"] = xi[:, 2]
            env["theta"] = np.arccos(np.clip(xi[:, 2], -1.0, 1.0))
            env["phi"] = np.arctan2(xi[:, 1], xi[:, 0])
        env.setdefault("phi", np.zeros(len(xi)))
        return eval(code, {"__builtins__": {}}, env)  # names whitelisted above

    return f


def _vector(text: str, name: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{name}: expected a comma separated vector, got {text!r}") from None


def _vectors(text: str, name: str) -> list:
    return [_vector(part, name) for part in text.split(";") if part.strip()]


def parse_atoms(text: str) -> tuple:
    dirs, weights = [], []
    for part in text.split(";"):
        if not part.strip():
            continue
        if ":" not in part:
            raise ConfigError("atoms: each entry must read 'direction:weight'")
        v, w = part.split(":", 1)
        dirs.append(_vector(v, "atoms"))
        try:
            weights.append(float(w))
        except ValueError:
            raise ConfigError(f"atoms: bad weight {w!r}") from None
    if not dirs:
        raise ConfigError("atoms: empty atom table")
    return np.asarray(dirs), np.asarray(weights)


def build_model(section: dict) -> StableModel:
    unknown = set(section) - MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown [model] keys: {sorted(unknown)}")
    for key in ("dimension", "alpha", "spectral"):
        if key not in section:
            raise ConfigError(f"[model] needs {key!r}")
    try:
        d, alpha = int(section["dimension"]), float(section["alpha"])
    except ValueError:
        raise ConfigError("dimension must be an integer and alpha a number") from None
    kind = section["spectral"].strip()
    needs = {"isotropic": {"value"}, "density": {"density", "bound"}, "atomic": {"atoms"}}
    if kind not in needs:
        raise ConfigError(f"spectral must be one of {sorted(needs)}")
    stray = (set(section) & {"value", "density", "bound", "atoms"}) - needs[kind]
    if stray:
        raise ConfigError(f"keys {sorted(stray)} do not apply to spectral = {kind}")
    if kind == "isotropic":
        mu = SpectralMeasure.isotropic(float(section.get("value", 1.0)))
    elif kind == "density":
        missing = needs[kind] - set(section)
        if missing:
            raise ConfigError(f"spectral = density needs {sorted(missing)}")
        expr = section["density"].strip()
        mu = SpectralMeasure.from_density(compile_density(expr, d), float(section["bound"]),
                                          expression=expr)
    else:
        if "atoms" not in section:
            raise ConfigError("spectral = atomic needs 'atoms'")
        dirs, w = parse_atoms(section["atoms"])
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        mu = SpectralMeasure.atomic(dirs, w)
    kw = {}
    if "quadrature" in section:
        kw["quadrature"] = sphere_quadrature(d, int(section["quadrature"]))
    return StableModel(d, alpha, mu, **kw)


@dataclass
class ExperimentConfig:
    model: StableModel
    task: str
    params: dict
    seed: int = 0
    out: str = "results"
    raw: dict = field(default_factory=dict)
    source: str = None

    def harnack_params(self) -> HarnackParams:
        p = self.params
        x0 = p.get("x0") or [0.0] * self.model.d
        if len(x0) != self.model.d:
            raise ConfigError("x0 does not match the dimension")
        defaults = HarnackParams(tuple(x0))
        return HarnackParams(tuple(x0), p.get("r", defaults.r), p.get("r0", defaults.r0),
                             p.get("lambda", defaults.lambda_), p.get("theta", defaults.theta),
                             p.get("sigma_ratio", defaults.sigma_ratio), p.get("a", defaults.a))


def _coerce(key: str, text: str):
    if key in ("x0", "start"):
        return _vector(text, key)
    if key == "points":
        return _vectors(text, key)
    if key in ("data", "family"):
        return text.strip()
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"[params] {key}: expected a number, got {text!r}") from None
    if key in ("n_random", "grid_n", "profile_dirs", "n_paths", "z_samples", "xbar_samples",
               "pairs", "ensemble_size", "signed_trials", "n_levels", "k", "J", "n_dirs"):
        if v != int(v):
            raise ConfigError(f"[params] {key} must be an integer")
        return int(v)
    return v


def load_config(path, seed: int = None, out: str = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    sections = set(parser.sections())
    unknown = sections - {"model", "experiment", "params"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    for s in ("model", "experiment"):
        if s not in sections:
            raise ConfigError(f"missing [{s}] section")
    raw = {s: dict(parser[s]) for s in parser.sections()}
    exp = raw["experiment"]
    if set(exp) - EXPERIMENT_KEYS:
        raise ConfigError(f"unknown [experiment] keys: {sorted(set(exp) - EXPERIMENT_KEYS)}")
    task = exp.get("task", "").strip()
    if task not in TASK_PARAMS:
        raise ConfigError(f"task must be one of {sorted(TASK_PARAMS)}")
    allowed = dict(TASK_PARAMS[task])
    if task in GEOMETRY_TASKS:
        allowed.update({k: None for k in GEOMETRY_KEYS})
    given = raw.get("params", {})
    bad = set(given) - set(allowed)
    if bad:
        raise ConfigError(f"unknown [params] keys for task {task}: {sorted(bad)}")
    params = dict(TASK_PARAMS[task])
    params.update({k: _coerce(k, v) for k, v in given.items()})
    params = {k: v for k, v in params.items() if v is not None}
    try:
        cfg_seed = int(exp.get("seed", 0))
    except ValueError:
        raise ConfigError("seed must be an integer") from None
    seed = cfg_seed if seed is None else int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    try:
        cfg = ExperimentConfig(build_model(raw["model"]), task, params, seed,
                               out or exp.get("out", "results"), raw, str(path))
        _revalidate(cfg)
    except ConfigError:
        raise
    except StableHarnackError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e
    return cfg


def _revalidate(cfg: ExperimentConfig):
    p = cfg.params
    if cfg.task in GEOMETRY_TASKS:
        cfg.harnack_params()
    if cfg.task == "harnack" and p["data"] not in ("ensemble", "constant"):
        raise ConfigError("data must be 'ensemble' or 'constant'")
    if cfg.task == "hoelder" and p["family"] not in FAMILIES + ("constant",):
        raise ConfigError(f"family must be one of {list(FAMILIES) + ['constant']}")
    for k in ("n_paths", "ensemble_size", "n_levels", "J", "pairs", "z_samples"):
        if k in p and p[k] < 1:
            raise ConfigError(f"{k} must be positive")
    if cfg.task in ("lemma1", "lemma3") and not 1.0 / p["lambda"] < p["a"] < 1.0:
        raise ConfigError("need 1/lambda < a < 1")
    if cfg.task in ("lemma2", "lemma3") and not p["theta"] > 1:
        raise ConfigError("need theta > 1")
    for key in ("x0", "start"):
        if key in p and len(p[key]) != cfg.model.d:
            raise ConfigError(f"{key} does not match the dimension")
    if cfg.task == "exit" and "start" in p and np.linalg.norm(p["start"]) >= p["r"]:
        raise ConfigError("start must lie inside the ball")
    if cfg.task == "symbol":
        for u in p.get("points", []):
            if len(u) != cfg.model.d:
                raise ConfigError("symbol point does not match the dimension")
    if cfg.model.mu.oracle_only and cfg.task not in ("symbol", "density", "exit"):
        raise ConfigError("atomic measures are oracle-only: tasks symbol, density, exit")


# ---------------------------------------------------------------------------
# tasks


@dataclass
class TaskResult:
    result: dict
    status: str = "ok"
    series: dict = field(default_factory=dict)   # file name -> list of row dicts
    tolerances: dict = field(default_factory=dict)


def _grid(cfg):
    p = cfg.params
    return unit_density_grid(cfg.model, L=p.get("grid_l"), N=p.get("grid_n"))


def task_symbol(cfg):
    m, p = cfg.model, cfg.params
    rng = task_rng(cfg.seed, 1)
    pts = [list(map(float, u)) for u in p.get("points", [])]
    e1 = [1.0] + [0.0] * (m.d - 1)
    pts = [e1] + pts + rng.normal(size=(p["n_random"], m.d)).tolist()
    vals = char_exponent(m, np.asarray(pts))
    rows = [{"u": json.dumps(u), "phi": float(v)} for u, v in zip(pts, vals)]
    return TaskResult({"phi_e1": float(vals[0]), "phi_max": float(m.phi_max),
                       "certificate": m.certificate, "points": rows},
                      series={"symbol.csv": rows}, tolerances={"phi": "quadrature 1e-12"})


def task_density(cfg):
    grid = _grid(cfg)
    hk = verify_heat_kernel_bound(cfg.model, grid)
    out = {"mass": grid.mass, "levels": len(grid.levels), "L": grid.L, "N": grid.N,
           "ringing": grid.ringing, "C_est": hk["C_est"], "worst_node": hk["worst_node"]}
    return TaskResult(out, series={"_radial": grid},
                      tolerances={"mass": "quadrature 1e-3", "C_est": "grid interpolation"})


def task_green(cfg):
    grid = _grid(cfg)
    prof = green_profile(cfg.model, grid, cfg.params.get("profile_dirs"))
    rows = [{"direction": json.dumps(list(map(float, e))), "G": float(v)}
            for e, v in zip(prof.directions, prof.values)]
    return TaskResult({"min_value": prof.min_value, "evenness_error": prof.evenness_error(),
                       "n_directions": len(rows), "t_split": prof.t_split, "s_max": prof.s_max},
                      series={"green_profile.csv": rows},
                      tolerances={"G": "quadrature rtol 1e-3"})


def task_exit(cfg):
    m, p = cfg.model, cfg.params
    r = p["r"]
    start = np.asarray(p.get("start", [0.0] * m.d))
    D = Ball(np.zeros(m.d), r)
    ex = sample_exit(build_scheme(m, DEFAULT_EPS_FRACTION * r), D, start,
                     task_rng(cfg.seed, 4), p["n_paths"])
    radii = ex.radii()
    out = {"n_paths": len(ex), "boundary_fraction": ex.boundary_fraction(),
           "radius_quantiles": np.quantile(radii / r, [0.1, 0.5, 0.9]).tolist(),
           "median_exit_time": float(np.median(ex.times))}
    if m.mu.kind == "isotropic" and not np.any(start):
        ks = stats.kstest(radii, lambda x: isotropic_exit_radius_cdf(m.alpha, m.d, r, x))
        out["ks_statistic"], out["ks_pvalue"] = float(ks.statistic), float(ks.pvalue)
    rows = [{"x": json.dumps(list(map(float, x))), "time": float(t)}
            for x, t in zip(ex.positions, ex.times)]
    return TaskResult(out, series={"exits.csv": rows},
                      tolerances={"quantiles": f"MC n={len(ex)}"})


def _lemma(cfg, which):
    m, p = cfg.model, cfg.params
    prof = green_profile(m, _grid(cfg))
    x0 = p.get("x0", [0.0] * m.d)
    common = dict(n_paths=p["n_paths"], seed=cfg.seed)
    if which == "lemma1":
        rep = verify_lemma1(m, prof, x0, p["r"], p["lambda"], p["a"], p["z_samples"], **common)
    elif which == "lemma2":
        rep = verify_lemma2(m, prof, x0, p["r"], p["theta"], p["a"], p["xbar_samples"], **common)
    else:
        rep = verify_lemma3(m, prof, x0, p["r"], p["lambda"], p["theta"], p["a"], p["pairs"],
                            p.get("delta1"), **common)
    rows = [{k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in s.items()}
            for s in rep.samples]
    return TaskResult(json.loads(rep.to_json()), rep.status, {f"{which}_samples.csv": rows},
                      {"G_D": "MC std_err per sample", "G": "quadrature rtol 1e-3"})


def task_harnack(cfg):
    m, p = cfg.model, cfg.params
    hp = cfg.harnack_params()
    bank = build_exit_bank(m, hp.ball, harnack_lattice(hp), p["n_paths"], cfg.seed)
    if p["data"] == "constant":
        g = ExteriorFunction.const(m.d)
        field_ = harmonic_extend(m, g, hp.ball, bank=bank)
        rep = verify_weak_harnack(m, field_, g, hp)
        return TaskResult({"report": rep.to_dict(), "c_est": rep.c_est}, rep.status,
                          tolerances={"terms": "MC std_err"})
    est = estimate_harnack_constant(m, hp, p["ensemble_size"], cfg.seed, p["n_paths"], bank)
    out = {"c1": est["c1"], "c1_err": est["c1_err"], "argmax": est["argmax"],
           "n_paths": est["n_paths"], "params": hp.to_dict()}
    series = {"harnack_ensemble.csv": est["distribution"]}
    if p["signed_trials"]:
        tr = signed_harnack_trials(m, hp, est["c1"], p["signed_trials"], cfg.seed,
                                   p["n_paths"], bank)
        out["signed"] = {k: v for k, v in tr.items() if k != "trials"}
        series["signed_trials.csv"] = tr["trials"]
    status = "ok" if math.isfinite(est["c1"]) else "inconclusive"
    return TaskResult(out, status, series, {"c1": "MC std_err (c1_err)"})


def task_hoelder(cfg):
    m, p = cfg.model, cfg.params
    hp = cfg.harnack_params()
    c1 = p.get("c1")
    if c1 is None:
        bank = build_exit_bank(m, hp.ball, harnack_lattice(hp), p["n_paths"], cfg.seed)
        c1 = estimate_harnack_constant(m, hp, p["ensemble_size"], cfg.seed, p["n_paths"],
                                       bank)["c1"]
    consts = hoelder_constants(c1, hp.theta)
    if p["family"] == "constant":
        g = ExteriorFunction.const(m.d)
    else:
        g = random_exterior(p["family"], hp, task_rng(cfg.seed, 30))
    nodes, _ = nested_lattice(hp, p["n_levels"])
    bank = build_exit_bank(m, hp.ball, nodes, p["n_paths"], cfg.seed, task=31)
    field_ = harmonic_extend(m, g, hp.ball, bank=bank)
    it = run_oscillation_iteration(m, field_, g, hp, c1, p["n_levels"])
    out = {"c1": c1, **consts, "iteration": it.to_dict(), "exterior": g.to_dict(),
           "params": hp.to_dict()}
    status = it.status
    try:
        out.update(estimate_hoelder_exponent(field_, hp, p["n_levels"]))
    except Inconclusive as e:
        out["beta_fit"], status = None, "inconclusive"
        out["note"] = str(e)
    rows = [{"level": n, "m": lo, "M": hi} for n, (lo, hi) in enumerate(zip(it.m, it.M))]
    return TaskResult(out, status, {"hoelder_levels.csv": rows},
                      {"u": "MC std_err per node", "beta_theory": "exact"})


def task_tail(cfg):
    hp = cfg.harnack_params()
    p = cfg.params
    rep = annulus_tail_decay(cfg.model, hp, p["k"], p["J"], p.get("n_dirs"))
    rows = [{"j": j + 1, "eta": e, "residual": res}
            for j, (e, res) in enumerate(zip(rep.eta, rep.residuals))]
    return TaskResult(rep.to_dict(), "inconclusive" if rep.flagged else "ok",
                      {"tail_decay.csv": rows}, {"eta": "angular quadrature"})


TASKS = {"symbol": task_symbol, "density": task_density, "green": task_green,
         "exit": task_exit, "lemma1": lambda c: _lemma(c, "lemma1"),
         "lemma2": lambda c: _lemma(c, "lemma2"), "lemma3": lambda c: _lemma(c, "lemma3"),
         "harnack": task_harnack, "hoelder": task_hoelder, "tail": task_tail}

HEADLINES = {"symbol": ("phi_e1", "phi_max"), "density": ("mass", "C_est"),
             "green": ("min_value",), "exit": ("boundary_fraction", "ks_statistic"),
             "lemma1": ("c1",), "lemma2": ("delta1", "c2"), "lemma3": ("c3", "c_tilde"),
             "harnack": ("c1", "c1_err", "c_est"), "hoelder": ("c1", "beta_fit", "beta_theory"),
             "tail": ("zeta_fit", "c_fit")}


# ---------------------------------------------------------------------------
# orchestration


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Ball):
        return {"center": o.center.tolist(), "radius": o.radius}
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _write_rows(path: Path, rows):
    if rows and isinstance(rows[0], dict):
        write_rows_csv(path, rows)
        return
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows or [])


def execute(cfg: ExperimentConfig) -> tuple:
    """Run the task, write artifacts, return (exit status, report dict)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = TASKS[cfg.task](cfg)
    wall = time.perf_counter() - t0
    report = {"task": cfg.task, "seed": cfg.seed, "model": cfg.model.mu.describe(),
              "model_key": cfg.model.key, "dimension": cfg.model.d, "alpha": cfg.model.alpha,
              "status": res.status, "result": res.result, "tolerances": res.tolerances}
    (out / "report.json").write_text(_dump(report))
    for name, rows in res.series.items():
        if name == "_radial":
            radial_slice_csv(rows, out / "density_radial.csv")
        else:
            _write_rows(out / name, rows)
    manifest = {"config": cfg.raw, "config_path": cfg.source, "model_key": cfg.model.key,
                "seed": cfg.seed, "versions": {"stableharnack": __version__,
                                               "numpy": np.__version__,
                                               "scipy": scipy.__version__,
                                               "python": platform.python_version()},
                "wall_time_s": wall,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    (out / "manifest.json").write_text(_dump(manifest))
    return (EXIT_INCONCLUSIVE if res.status == "inconclusive" else EXIT_OK), report


def run(cfg: ExperimentConfig) -> int:
    try:
        status, _ = execute(cfg)
    except (Inconclusive, BudgetExceeded) as e:
        print(f"inconclusive: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except Exception as e:  # noqa: BLE001 - any failure maps to status 1
        print(f"error in task {cfg.task}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    return status


def _headline(task, report) -> dict:
    res = report["result"]
    pools = [res, res.get("constants", {}) if isinstance(res, dict) else {}]
    row = {}
    for key in HEADLINES[task]:
        row[key] = next((pool[key] for pool in pools if key in pool), "")
    return row


def sweep(paths: list, out: str = "sweep") -> tuple:
    """One row per config with headline numbers; failures are kept as rows."""
    paths = sorted(paths)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgs, rows = [], []
    for path in paths:
        try:
            cfgs.append((path, load_config(path)))
        except StableHarnackError as e:
            cfgs.append((path, e))
    tasks = {c.task for _, c in cfgs if isinstance(c, ExperimentConfig)}
    if len(tasks) > 1:
        raise ConfigError(f"sweep needs a single task, got {sorted(tasks)}")
    task = tasks.pop() if tasks else None
    for path, cfg in cfgs:
        row = {"config": path, "status": "", "error": ""}
        row.update({k: "" for k in HEADLINES.get(task, ())})
        if not isinstance(cfg, ExperimentConfig):
            row.update(status="error", error=str(cfg))
            rows.append(row)
            continue
        cfg.out = str(out_dir / Path(path).stem)
        try:
            _, report = execute(cfg)
            row["status"] = report["status"]
            row.update(_headline(task, report))
        except StableHarnackError as e:
            row.update(status="error", error=f"{type(e).__name__}: {e}")
        rows.append(row)
    write_rows_csv(out_dir / "sweep.csv", rows)
    return rows


def validate(path) -> dict:
    cfg = load_config(path)
    return {"task": cfg.task, "seed": cfg.seed, "model_key": cfg.model.key,
            "model": cfg.model.mu.describe(), "params": cfg.params,
            "oracle_only": cfg.model.mu.oracle_only}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="stableharnack",
                                 description=f"Stable-process Harnack/Hoelder experiments. "
                                             f"Thread count for FFTs: ${THREADS_ENV}.")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_sw = sub.add_parser("sweep", help="run several configs of one task")
    p_sw.add_argument("--configs", required=True, help="glob pattern")
    p_sw.add_argument("--out", default="sweep")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)
    args = ap.parse_args(argv)

    try:
        if args.command == "run":
            return run(load_config(args.config, args.seed, args.out))
        if args.command == "validate":
            print(_dump(validate(args.config)), end="")
            return EXIT_OK
        rows = sweep(glob.glob(args.configs), args.out)
        print(f"{len(rows)} rows -> {Path(args.out) / 'sweep.csv'}")
        return EXIT_OK
    except StableHarnackError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
