import json
import os
from pathlib import Path

import numpy as np
import pytest

import tdflow

CONFIG_DIR = Path(os.environ.get("TDFLOW_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))


def two_cycle():
    # Two states, one action, deterministic swap.
    return np.array([[0.0, 1.0], [1.0, 0.0]]), np.ones((2, 1))


def test_successor_measure_of_two_cycle():
    p, pi = two_cycle()
    gamma = 0.5
    m = tdflow.successor_measure(p, pi, gamma)
    stay = gamma / (1.0 + gamma)
    np.testing.assert_allclose(m, [[stay, 1.0 - stay], [1.0 - stay, stay]], atol=1e-12)
    np.testing.assert_allclose(tdflow.bellman_apply(m, p, pi, gamma), m, atol=1e-12)


def test_value_matches_linear_solve():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(3), size=6)  # 3 states x 2 actions
    pi = np.full((3, 2), 0.5)
    r = np.array([1.0, 0.0, -1.0])
    gamma = 0.9
    pp = np.einsum("rx,xb->rxb", p, pi).reshape(6, 6)
    q = np.linalg.solve(np.eye(6) - gamma * pp, p @ r).reshape(3, 2)
    np.testing.assert_allclose(tdflow.value(p, pi, r, gamma), q, atol=1e-10)


def test_emd_of_shifted_sets():
    a = np.random.default_rng(1).normal(size=(20, 2))
    assert tdflow.emd(a, a) == pytest.approx(0.0, abs=1e-12)
    assert tdflow.emd(a, a + [3.0, 4.0]) == pytest.approx(5.0)


def test_config_errors_name_the_field():
    with pytest.raises(tdflow.ConfigError, match="train.gamma"):
        tdflow.validate_config(json.dumps({"env": {"kind": "cycle"}, "train": {"gamma": 1.0}}))
    with pytest.raises(ValueError):
        tdflow.validate_config("{")
    with pytest.raises(tdflow.ConfigError):
        tdflow.successor_measure(np.ones((2, 2)), np.ones((2, 1)), 0.5)


def test_oracle_command_writes_reports(tmp_path):
    run_dir = Path(tdflow.run("oracle", CONFIG_DIR / "random_mdp_oracle.json", out=tmp_path))
    assert run_dir.parent == tmp_path
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert (run_dir / "successor.csv").exists()
    assert "oracle" in tdflow.commands()
    with pytest.raises(OSError):
        tdflow.run("oracle", tmp_path / "missing.json", out=tmp_path)
