import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

import macrocast

ROOT = Path(__file__).resolve().parents[2]


def write_config(tmp_path, **overrides):
    data = tmp_path / "data.csv"
    macrocast.synth(data, seed=5, n_vars=6, quarters=128)
    cfg = {
        "data": {"path": str(data), "target": "GDP"},
        "seed": 3,
        "roster": {"forest_trees": 20, "boost_rounds": 20},
        "models": ["AR", "FM-AR-SE", "RF-SE", "FM-LASSO"],
        "ensembles": [{"id": "MED", "kind": "median", "members": ["RF-SE", "FM-LASSO"]}],
        "evaluation": {"periods": ["2004-2009", "2020-2022"]},
        "explain": {"models": ["RF-SE"], "periods": ["2023-2023"], "background_rows": 8, "n_permutations": 64},
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_weights():
    assert macrocast.weights_reciprocal([1.0, 3.0]) == pytest.approx([0.75, 0.25], abs=1e-15)
    e = math.e
    assert macrocast.weights_exponential([0.0, 1.0], beta=1.0) == pytest.approx([e / (e + 1), 1 / (e + 1)], abs=1e-15)


def test_shapley_linear_model():
    w = np.array([1.0, -2.0, 0.5])
    bg = np.random.default_rng(0).normal(size=(10, 3))
    x = np.array([0.3, 1.0, -2.0])
    a = macrocast.shapley_exact(lambda rows: rows @ w, x, bg)
    assert a["phi"] == pytest.approx(w * (x - bg.mean(axis=0)), abs=1e-12)
    assert a["base_value"] + sum(a["phi"]) == pytest.approx(a["prediction"], abs=1e-12)
    s = macrocast.shapley_sampled(lambda rows: rows @ w, x, bg, n_permutations=64, seed=1)
    assert s["base_value"] + sum(s["phi"]) == pytest.approx(s["prediction"], abs=1e-9)


def test_fit_and_predict():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 3))
    y = x @ np.array([1.0, 2.0, -1.0]) + 0.5
    m = macrocast.fit("ols", x, y)
    assert m.predict(x) == pytest.approx(y, abs=1e-9)
    g = macrocast.fit("gbdt", x, y, n_trees=30, max_depth=2)
    assert len(g.stage_loss) == 30
    assert all(b <= a + 1e-12 for a, b in zip(g.stage_loss, g.stage_loss[1:]))


def test_errors_are_typed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"data": {"path": "x.csv", "target": "GDP"}, "models": ["AR"], "backtest": {"refit_every": "1"}}))
    with pytest.raises(macrocast.ConfigError, match="backtest.refit_every"):
        macrocast.load_config(bad)
    with pytest.raises(macrocast.ConfigError):
        macrocast.fit("no_such_family", np.zeros((4, 1)), np.zeros(4))


def test_end_to_end(tmp_path):
    cfg = write_config(tmp_path)
    run = tmp_path / "run"
    summary = macrocast.backtest(cfg, run, workers=2)
    assert summary["records"] == 5 * 112  # four models and one ensemble
    macrocast.evaluate(run)
    macrocast.explain(run)
    with open(run / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    assert {r["model_id"] for r in rows} == {"AR", "FM-AR-SE", "RF-SE", "FM-LASSO", "MED"}
    for r in rows:
        if r["rmse"]:
            assert float(r["rmse"]) >= float(r["mae"]) - 1e-12
    assert (run / "shapley.csv").stat().st_size > 0
    assert "AR" in macrocast.report(run)


def test_shipped_configs_match_schema():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((ROOT / "schemas" / "run_config.schema.json").read_text())
    for path in sorted((ROOT / "configs").glob("*.json")):
        jsonschema.validate(json.loads(path.read_text()), schema)
        macrocast.load_config(path)
