import math
from pathlib import Path

import numpy as np
import pytest

import rbmchoice

ROOT = Path(__file__).resolve().parents[2]

SMALL = """
[alternatives]
names = a, b, c
reference = c

[attributes]
cost = 1

[generic]
names = g1, g2

[indicators]
i1 = a
i2 = b

[latent.Comfort]
function = sigmoid
inputs = g1, g2

[measurement]
i1 = Comfort
i2 = Comfort

[crbm]
epochs = 20
learning_rate = 0.1
init_std = 0.1

[pipeline]
seed = 5

[synth]
family = iclv
n_obs = 300
truth_seed = 2
"""


def test_fit_statistics_identities():
    s = rbmchoice.fit_statistics(-2917.752, -2013.685, 123, 1000)
    assert abs(s["rho_square"] - 0.310) < 0.0005
    assert s["aic"] == pytest.approx(2 * 123 + 2 * 2013.685)
    assert s["bic"] == pytest.approx(123 * math.log(1000) + 2 * 2013.685)


def test_free_energy_matches_enumeration():
    rng = np.random.default_rng(0)
    c_alt = rng.normal(size=3)
    c_lat = rng.normal(size=2)
    D = rng.normal(size=(3, 2))
    for y in range(3):
        terms = [c_alt[y] + h0 * (c_lat[0] + D[y, 0]) + h1 * (c_lat[1] + D[y, 1]) for h0 in (0, 1) for h1 in (0, 1)]
        expect = -np.log(np.sum(np.exp(terms)))
        assert rbmchoice.crbm_free_energy(c_alt, c_lat, D, y) == pytest.approx(expect, abs=1e-12)


def test_generate_and_mnl():
    cfg = rbmchoice.parse_config(SMALL)
    assert cfg.alternatives == ["a", "b", "c"]
    assert cfg.latents == ["Comfort"]
    ds = rbmchoice.load_dataset(cfg)
    assert len(ds) == 300
    assert set(np.unique(ds.choices)) <= {0, 1, 2}
    est = rbmchoice.estimate_mnl(ds, cfg)
    assert est["converged"]
    assert est["stats"]["final_ll"] >= ds.null_log_likelihood()
    names = [p["name"] for p in est["params"]]
    assert "cost" in names


def test_two_stage_runs():
    cfg = rbmchoice.parse_config(SMALL)
    out = rbmchoice.two_stage(rbmchoice.load_dataset(cfg), cfg)
    assert "cold_start" in out
    assert out["two_stage"]["stats"]["final_ll"] >= out["cold_start"]["stats"]["final_ll"] - 1e-6
    assert "Final Loglikelihood" in out["report"]


def test_shipped_config_and_errors(tmp_path):
    cfg = rbmchoice.load_config(ROOT / "configs" / "demo.conf")
    cfg.seed = 11
    assert cfg.seed == 11
    with pytest.raises(rbmchoice.ConfigError):
        rbmchoice.parse_config("[nonsense]\nx = 1\n")
    with pytest.raises(ValueError):
        rbmchoice.generate("probit", 10, 0)
    conf = tmp_path / "small.conf"
    conf.write_text(SMALL)
    assert rbmchoice.cli(["--config", str(conf), "--out", str(tmp_path / "out"), "generate"]) == 0
    assert any((tmp_path / "out").iterdir())
    assert rbmchoice.cli(["no-such-command"]) == 1
