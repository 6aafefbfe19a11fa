import json
import os

import numpy as np
import pytest

from spikekern.errors import ConfigError, SimulationError
from spikekern.network import (Network, build_ei_net, config_from_dict, load_config, simulate, state_byte_count,
                               write_manifest, write_monitors, write_raster)

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def test_ei_net_shapes():
    cfg = build_ei_net(scale=1.0)
    assert [p.size for p in cfg.populations] == [3200, 800]
    assert all(pc.comm["prob"] == pytest.approx(0.02) for pc in cfg.projections)
    big = build_ei_net(scale=10.0)
    assert [p.size for p in big.populations] == [32000, 8000]
    assert big.projections[0].comm["prob"] == pytest.approx(0.002)
    with pytest.warns(UserWarning):
        tiny = build_ei_net(scale=0.01)
    assert [p.size for p in tiny.populations] == [32, 8]
    assert tiny.projections[0].comm["prob"] == 1.0
    with pytest.raises(ConfigError):
        build_ei_net(scale=0.0)
    with pytest.raises(ConfigError):
        build_ei_net(comm_kind="telepathy")


def test_zero_duration():
    res = simulate(build_ei_net(scale=0.25, duration=0.0))
    assert res.n_steps == 0 and res.raster.shape == (0, 2)
    assert res.mean_rates() == {"E": 0.0, "I": 0.0}


def test_deterministic_and_seed_sensitive():
    a = simulate(build_ei_net(scale=0.25, duration=50.0, seed=4))
    b = simulate(build_ei_net(scale=0.25, duration=50.0, seed=4))
    c = simulate(build_ei_net(scale=0.25, duration=50.0, seed=5))
    assert np.array_equal(a.raster, b.raster)
    assert not np.array_equal(a.raster, c.raster)
    assert a.manifest == b.manifest


def test_ei_rates_in_band():
    res = simulate(build_ei_net(scale=1.0, duration=200.0, seed=0))
    rates = res.mean_rates()
    for pid in ("E", "I"):
        assert 22.0 * 0.8 <= rates[pid] <= 22.0 * 1.2, rates


@pytest.mark.parametrize("kind", ["sparse", "dense"])
def test_comm_backends_give_identical_rasters(kind):
    base = simulate(build_ei_net(scale=0.25, duration=60.0, comm_kind="jitconn", seed=2))
    other = simulate(build_ei_net(scale=0.25, duration=60.0, comm_kind=kind, seed=2))
    assert base.raster.size > 0
    assert np.array_equal(base.raster, other.raster)


def test_state_bytes_components():
    cfg = build_ei_net(scale=0.5)
    sb = state_byte_count(cfg)
    n = 2000
    assert sb["neurons"] == 17 * n
    # E and I conductances for both targets: four groups sized by the post population
    assert sb["synapses"] == 8 * 2 * n
    assert sb["comm"] == 4 * 40
    assert sb["delays"] == n
    assert sb["total"] == sum(v for k, v in sb.items() if k != "total")
    sparse = state_byte_count(build_ei_net(scale=0.5, comm_kind="sparse"))
    assert sparse["comm"] > 100 * sb["comm"]


def test_state_bytes_linear_in_scale():
    totals = [state_byte_count(build_ei_net(scale=s))["total"] for s in (1, 2, 4)]
    assert totals[1] - totals[0] == pytest.approx((totals[2] - totals[1]) / 2)


def test_config_file_round_trip():
    cfg = load_config(os.path.join(CONFIGS, "two_pop.cfg"))
    res = simulate(cfg)
    assert set(res.sizes) == {"exc", "inh"}
    assert "exc.rate" in res.traces and "exc.v[2]" in res.traces
    rates = res.mean_rates()
    assert 5.0 < rates["exc"] < 60.0
    again = simulate(config_from_dict(json.loads(json.dumps(res.manifest["config"]))))
    assert np.array_equal(res.raster, again.raster)


def test_five_area_config_loads():
    cfg = load_config(os.path.join(CONFIGS, "five_area.cfg"))
    net = Network(cfg)
    assert len(net.pops) == 10
    assert len(net.registry) < len(cfg.projections)


@pytest.mark.parametrize("bad", [
    {"populations": [{"id": "A", "size": 0}]},
    {"populations": [{"id": "A", "size": 3, "model": "HH"}]},
    {"populations": [{"id": "A", "size": 3, "params": {"bogus": 1}}]},
    {"populations": [{"id": "A", "size": 3}, {"id": "A", "size": 3}]},
    {"populations": [{"id": "A", "size": 3}], "monitors": [{"target": "B", "signal": "spikes"}]},
    {"populations": [{"id": "A", "size": 3}], "inputs": [{"target": "A", "kind": "laser"}]},
    {"populations": [{"id": "A", "size": 3}],
     "projections": [{"pre": "A", "post": "A", "syn_tau": [1.0, 2.0], "comm": {"prob": 0.5, "weight": 1}}]},
    {"populations": [{"id": "A"}]},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        config_from_dict({"dt": 0.1, "duration": 1.0} | bad)


def test_non_finite_state_aborts():
    cfg = config_from_dict({"dt": 0.1, "duration": 5.0,
                            "populations": [{"id": "A", "size": 3}],
                            "inputs": [{"target": "A", "kind": "constant", "value": float("nan")}]})
    with pytest.raises(SimulationError) as err:
        simulate(cfg)
    assert err.value.step == 0


def test_refractory_invariant_on_traces():
    cfg = config_from_dict({
        "dt": 0.1, "duration": 100.0, "seed": 1,
        "populations": [{"id": "A", "size": 4, "params": {"tau_ref": 3.0}}],
        "inputs": [{"target": "A", "kind": "constant", "value": 40.0}],
        "monitors": [{"target": "A", "signal": "spikes"}, {"target": "A", "signal": "v"}]})
    res = simulate(cfg)
    v = res.traces["A.v[0]"]
    steps = res.raster[res.raster[:, 1] == 0, 0]
    assert steps.size > 5
    assert np.all(np.diff(steps) * 0.1 >= 3.0 - 1e-9)
    for s in steps:
        assert np.all(v[s:s + 30] == -60.0)


def test_output_writers(tmp_path):
    res = simulate(load_config(os.path.join(CONFIGS, "two_pop.cfg")))
    write_raster(tmp_path / "r.tsv", res)
    write_monitors(tmp_path / "m.csv", res)
    write_manifest(tmp_path / "man.json", res)
    lines = (tmp_path / "r.tsv").read_text().splitlines()
    assert len(lines) == len(res.raster)
    assert lines[0] == f"{res.raster[0, 0]}\t{res.raster[0, 1]}"
    header = (tmp_path / "m.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "step" and "exc.rate" in header
    man = json.loads((tmp_path / "man.json").read_text())
    assert man["n_steps"] == 2000 and man["seeds"]["master"] == 11
