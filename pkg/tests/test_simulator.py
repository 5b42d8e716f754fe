import pytest
from hypothesis import given, settings, strategies as st

from wormhole_nc.analysis import transit_delay
from wormhole_nc.model import ConfigError, parse_config
from wormhole_nc.simulator import (
    SimConfig,
    parse_sim_section,
    simulate,
    sweep_offsets,
    trial_configs,
)

from _instances import build_document
from test_model import ring_document


def lone(length, routers, buffer, epsilon=1.0, capacity=100.0, flit=1.0):
    doc = build_document([("f", length, 1000, routers)], buffer=buffer,
                         epsilon=epsilon, capacity=capacity, flit=flit)
    model, flows = parse_config(doc)
    return model, flows, SimConfig(model, tuple(flows), 1.0, flit_size=flit)


@pytest.mark.parametrize("buffer", [1, 3, 20, 56, 1000])
@pytest.mark.parametrize("routers", [["A"], ["A", "B"], ["A", "B", "C", "D", "E"]])
def test_lone_packet_takes_transit_delay(buffer, routers):
    model, flows, config = lone(100, routers, buffer)
    r = simulate(config, check_invariants=True)
    assert r.flows["f"].packets == 1
    assert r.flows["f"].max_latency == pytest.approx(transit_delay(model, flows[0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(1, 6), st.integers(1, 64), st.integers(1, 30))
def test_lone_packet_exact_property(length, n, buffer, eps_ticks):
    routers = [chr(ord("A") + i) for i in range(n)]
    model, flows, config = lone(length, routers, buffer, epsilon=eps_ticks / 100)
    got = simulate(config).flows["f"].max_latency
    assert abs(got - transit_delay(model, flows[0])) <= 0.01 + 1e-9


def test_net_y_invariants_and_bounds(net_y_doc, net_y):
    model, flows = net_y
    config = parse_sim_section(net_y_doc, model, flows)
    r = simulate(config, check_invariants=True)
    assert not r.deadlock
    assert all(s.packets > 0 for s in r.flows.values())
    for port, occupancy in r.max_occupancy.items():
        assert occupancy <= model.buffer


@pytest.mark.parametrize("buffer", [1, 2, 7])
def test_occupancy_never_exceeds_buffer(net_y, buffer):
    model, flows = net_y
    model = model.with_buffer(buffer)
    config = SimConfig(model, tuple(flows), 200.0)
    r = simulate(config, check_invariants=True)
    assert max(r.max_occupancy.values()) <= buffer


def test_deterministic(net_y):
    model, flows = net_y
    config = SimConfig(model, tuple(flows), 300.0, offsets={"f2": 0.37}, seed=4)
    assert simulate(config).to_dict() == simulate(config).to_dict()
    assert sweep_offsets(config, 5, 9).to_dict() == sweep_offsets(config, 5, 9).to_dict()


def test_one_trial_is_plain_simulation(net_y):
    model, flows = net_y
    config = SimConfig(model, tuple(flows), 300.0)
    a, b = sweep_offsets(config, 1, 3), simulate(config)
    assert {k: v.max_latency for k, v in a.flows.items()} == \
           {k: v.max_latency for k, v in b.flows.items()}


def test_more_trials_never_lower_maxima(net_y):
    model, flows = net_y
    config = SimConfig(model, tuple(flows), 300.0)
    few, many = sweep_offsets(config, 4, 2), sweep_offsets(config, 12, 2)
    for fid in few.flows:
        assert many.flows[fid].max_latency >= few.flows[fid].max_latency
    assert many.trials == 12


def test_trial_offsets_lie_within_period(net_y):
    model, flows = net_y
    config = SimConfig(model, tuple(flows), 300.0)
    trials = trial_configs(config, 20, 1)
    assert trials[0] is config
    for t in trials[1:]:
        for f in flows:
            assert 0 <= t.offsets[f.id] < f.period


def test_jitter_stays_within_declared_bound():
    doc = build_document([("f", 10, 5, ["A", "B"], 5, 2.0)])
    model, flows = parse_config(doc)
    config = SimConfig(model, tuple(flows), 200.0, seed=11)
    r = simulate(config)
    assert r.flows["f"].packets == 40
    assert r.flows["f"].max_latency <= transit_delay(model, flows[0]) + 1e-9


def test_parallel_trials_match_serial(net_y):
    model, flows = net_y
    config = SimConfig(model, tuple(flows), 300.0)
    assert sweep_offsets(config, 4, 5, workers=2).to_dict() == \
           sweep_offsets(config, 4, 5).to_dict()


def test_deadlock_is_reported():
    doc = ring_document()
    doc["network"]["buffer"] = 1
    doc["network"]["epsilon"] = 0.01
    for f in doc["flows"]:
        f["length"] = 50
    model, flows = parse_config(doc)
    r = simulate(SimConfig(model, tuple(flows), 1.0), check_invariants=True)
    assert r.deadlock


def test_sim_section(net_y_doc, net_y):
    model, flows = net_y
    config = parse_sim_section(net_y_doc, model, flows)
    assert config.horizon == 400 and config.trials == 100 and config.seed == 1
    net_y_doc["sim"]["offsets"] = {"nope": 1}
    with pytest.raises(ConfigError, match="sim.offsets.nope"):
        parse_sim_section(net_y_doc, model, flows)
    net_y_doc["sim"] = {"trials": 0}
    with pytest.raises(ConfigError, match="sim.trials"):
        parse_sim_section(net_y_doc, model, flows)


def test_config_checks(net_y):
    model, flows = net_y
    with pytest.raises(ValueError):
        SimConfig(model, tuple(flows), 0)
    with pytest.raises(ValueError):
        SimConfig(model, tuple(flows), 10, offsets={"f1": -1})
