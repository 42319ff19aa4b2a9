import json
import re
import textwrap

import numpy as np
import pytest

from stableharnack import cli
from stableharnack.cli import ConfigError, compile_density, load_config, main, sweep

ISO = """
[model]
dimension = 2
alpha = 1.0
spectral = isotropic
value = 1.0
"""


def write(tmp_path, name, body):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return p


def config(tmp_path, task, params="", model=ISO, name="c.ini", seed=1):
    body = model + f"\n[experiment]\ntask = {task}\nseed = {seed}\nout = {tmp_path / 'out'}\n"
    if params:
        body += "\n[params]\n" + params
    return write(tmp_path, name, body)


def read_report(tmp_path, sub="out"):
    return json.loads((tmp_path / sub / "report.json").read_text())


def test_symbol_task_reports_closed_form(tmp_path):
    assert main(["run", "--config", str(config(tmp_path, "symbol"))]) == 0
    rep = read_report(tmp_path)
    assert rep["result"]["phi_e1"] == pytest.approx(4.0, abs=1e-8)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["model_key"] == rep["model_key"]
    assert {"numpy", "scipy", "python", "stableharnack"} <= set(manifest["versions"])
    assert "timestamp" in manifest and "wall_time_s" in manifest
    assert (tmp_path / "out" / "symbol.csv").exists()


def test_seed_override_and_determinism(tmp_path):
    cfg = config(tmp_path, "symbol")
    main(["run", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "b")])
    main(["run", "--config", str(cfg), "--seed", "10", "--out", str(tmp_path / "c")])
    a, b, c = ((tmp_path / s / "report.json").read_bytes() for s in "abc")
    assert a == b and a != c


def test_density_expression_is_sandboxed():
    f = compile_density("1 + 0.5*cos(theta)**2", 2)
    np.testing.assert_allclose(f(np.array([[1.0, 0.0], [0.0, 1.0]])), [1.5, 1.0])
    g = compile_density("1 + z**2 + 0*phi", 3)
    np.testing.assert_allclose(g(np.array([[0.0, 0.0, 1.0]])), [2.0])
    for bad in ("__import__('os')", "theta.real", "[1][0]", "lambda: 1", "open('x')",
                "'a'", "foo + 1", "1 +"):
        with pytest.raises(ConfigError):
            compile_density(bad, 2)


@pytest.mark.parametrize("model,params,msg", [
    (ISO + "colour = red\n", "", "unknown [model] keys"),
    (ISO, "bogus = 1\n", "unknown [params] keys"),
    (ISO.replace("isotropic", "weird"), "", "spectral must be"),
    (ISO + "density = 1\n", "", "do not apply"),
    (ISO.replace("dimension = 2", "dimension = 4"), "", "dimension"),
])
def test_invalid_configs_rejected(tmp_path, model, params, msg):
    cfg = config(tmp_path, "symbol", params, model=model)
    with pytest.raises(ConfigError, match=re.escape(msg)):
        load_config(cfg)
    assert main(["validate", "--config", str(cfg)]) == 1


def test_parameter_constraints_revalidated(tmp_path):
    for task, params in [("harnack", "lambda = 3\n"), ("lemma1", "a = 0.3\n"),
                         ("harnack", "data = wiggly\n"), ("exit", "start = 2, 0\n"),
                         ("tail", "x0 = 1, 2, 3\n"), ("harnack", "n_paths = 0\n")]:
        with pytest.raises(ConfigError):
            load_config(config(tmp_path, task, params))


def test_atomic_models_limited_to_oracle_tasks(tmp_path):
    atomic = ISO.replace("isotropic", "atomic").replace("value = 1.0", "atoms = 1,0:1; -1,0:1; 0,1:1; 0,-1:1")
    assert load_config(config(tmp_path, "symbol", model=atomic)).model.mu.oracle_only
    with pytest.raises(ConfigError, match="oracle-only"):
        load_config(config(tmp_path, "harnack", model=atomic))


def test_unknown_section_and_task(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "x.ini", ISO + "[extra]\na = 1\n[experiment]\ntask = symbol\n"))
    with pytest.raises(ConfigError):
        load_config(config(tmp_path, "dance"))


def test_validate_prints_summary(tmp_path, capsys):
    assert main(["validate", "--config", str(config(tmp_path, "tail", "J = 5\n"))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["task"] == "tail" and out["params"]["J"] == 5


def test_harnack_constant_data(tmp_path):
    cfg = config(tmp_path, "harnack", "data = constant\nn_paths = 200\n")
    assert main(["run", "--config", str(cfg)]) == 0
    assert read_report(tmp_path)["result"]["c_est"] == 1.0


def test_flagged_tail_decay_is_inconclusive(tmp_path):
    # sigma close to 1 makes the sup over the centre ball inflate the first annuli
    cfg = config(tmp_path, "tail", "sigma_ratio = 1.2\nJ = 12\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert read_report(tmp_path)["status"] == "inconclusive"


def test_module_failure_maps_to_status_one(tmp_path, monkeypatch):
    def boom(cfg):
        raise RuntimeError("disk on fire")
    monkeypatch.setitem(cli.TASKS, "symbol", boom)
    assert main(["run", "--config", str(config(tmp_path, "symbol"))]) == 1


def test_sweep_rows_and_failures(tmp_path):
    for r in ("0.5", "1.0", "2.0"):
        config(tmp_path, "tail", f"r = {r}\nr0 = 2\nJ = 5\n", name=f"r{r}.ini")
    config(tmp_path, "tail", "r = 3\nJ = 5\n", name="zbad.ini")
    rows = sweep(sorted(str(p) for p in tmp_path.glob("*.ini")), str(tmp_path / "sw"))
    assert [r["status"] for r in rows] == ["ok", "ok", "ok", "error"]
    c = [float(r["c_fit"]) for r in rows[:3]]
    assert c[0] == pytest.approx(2 * c[1]) and c[1] == pytest.approx(2 * c[2])
    assert (tmp_path / "sw" / "sweep.csv").read_text().count("\n") == 5


def test_sweep_empty_and_mixed(tmp_path):
    assert sweep([], str(tmp_path / "e")) == []
    assert main(["sweep", "--configs", str(tmp_path / "none*.ini"), "--out",
                 str(tmp_path / "e2")]) == 0
    a = config(tmp_path, "symbol", name="a.ini")
    b = config(tmp_path, "tail", name="b.ini")
    with pytest.raises(ConfigError, match="single task"):
        sweep([str(a), str(b)], str(tmp_path / "m"))


def test_shipped_configs_validate():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(root.rglob("*.ini"))
    assert paths
    for p in paths:
        assert main(["validate", "--config", str(p)]) == 0, p
