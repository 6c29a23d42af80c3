import numpy as np
import pytest

from amelump.model import powerlaw_distribution
from amelump.netsim import (
    average_runs,
    generate_configuration_network,
    initial_node_states,
    neighbor_counts,
    simulate_gillespie,
)
from conftest import make_model, uniform_degree


def dirac(k):
    p = [0.0] * (k + 1)
    p[k] = 1.0
    return {"type": "table", "p": p}


def sis_model(degree, horizon=2.0, grid_points=21):
    return make_model(
        ["S", "I"],
        [("S", "I", "1.5 * m[I]"), ("I", "S", "0.8")],
        degree,
        {"S": 0.8, "I": 0.2},
        horizon=horizon, grid_points=grid_points,
    )


def test_regular_network_basic_properties():
    model = sis_model(dirac(2))
    net = generate_configuration_network(model.degree, 5000, seed=1)
    assert net.n_nodes == 5000
    # self-loop and multi-edge erasure removes under 1% of stubs here
    assert net.erasure_loss < 0.01
    assert net.degrees.mean() == pytest.approx(2.0, abs=0.05)
    assert net.degrees.max() <= 2


def test_network_adjacency_is_symmetric_and_simple():
    dist = powerlaw_distribution(2.5, kmin=1, kmax=20)
    net = generate_configuration_network(dist, 2000, seed=2)
    edges = set()
    for u in range(net.n_nodes):
        for v in net.neighbors(u):
            assert v != u  # no self-loops
            edges.add((u, v))
    for u, v in edges:
        assert (v, u) in edges  # symmetric
    # no duplicates: neighbor lists are strictly increasing
    for u in range(net.n_nodes):
        nb = net.neighbors(u)
        assert np.all(np.diff(nb) > 0)


def test_two_nodes_degree_one_forms_single_edge():
    dist = powerlaw_distribution(2.5, kmin=1, kmax=1)  # all nodes degree 1
    net = generate_configuration_network(dist, 2, seed=3)
    assert net.degrees.tolist() == [1, 1]
    assert net.neighbors(0).tolist() == [1]
    assert net.neighbors(1).tolist() == [0]


def test_degree_histogram_matches_distribution():
    dist = powerlaw_distribution(2.5, kmin=1, kmax=20)
    net = generate_configuration_network(dist, 100_000, seed=4)
    hist = np.bincount(net.degrees, minlength=21) / net.n_nodes
    # total variation distance before erasure would be ~sampling noise;
    # erasure trims a little from high degrees
    tv = 0.5 * np.abs(hist - dist.p).sum()
    assert tv < 0.02


def test_network_generation_is_deterministic():
    dist = powerlaw_distribution(2.5, kmin=1, kmax=10)
    a = generate_configuration_network(dist, 500, seed=7)
    b = generate_configuration_network(dist, 500, seed=7)
    assert np.array_equal(a.indptr, b.indptr)
    assert np.array_equal(a.indices, b.indices)
    c = generate_configuration_network(dist, 500, seed=8)
    assert not (np.array_equal(a.indptr, c.indptr)
                and np.array_equal(a.indices, c.indices))


def test_initial_node_states_match_fractions():
    model = sis_model(dirac(2))
    states = initial_node_states(model, 100_000, np.random.default_rng(5))
    frac_i = (states == 1).mean()
    assert frac_i == pytest.approx(0.2, abs=0.01)


def test_no_rules_leaves_everything_constant():
    model = make_model(
        ["A", "B"], [], dirac(2), {"A": 0.6, "B": 0.4},
        horizon=1.0, grid_points=5,
    )
    net = generate_configuration_network(model.degree, 1000, seed=6)
    run = simulate_gillespie(net, model, seed=9)
    assert run.events == 0
    assert np.all(run.trajectory.globals == run.trajectory.globals[0])


def test_pure_decay_matches_closed_form():
    # I -> R at rate 1, no neighbor coupling: E[x_I(t)] = x_I(0) e^{-t}
    model = make_model(
        ["I", "R"], [("I", "R", "1.0")], dirac(2), {"I": 0.8, "R": 0.2},
        horizon=2.0, grid_points=11,
    )
    n, runs = 2000, 50
    stack = []
    for i in range(runs):
        net = generate_configuration_network(model.degree, n, seed=100 + i)
        run = simulate_gillespie(net, model, seed=200 + i)
        stack.append(run.trajectory.globals[:, 0])
    mean = np.mean(stack, axis=0)
    sem = np.std(stack, axis=0, ddof=1) / np.sqrt(runs)
    expect = 0.8 * np.exp(-model_times(model))
    assert np.all(np.abs(mean - expect) <= 3 * sem + 1e-12)


def model_times(model):
    return np.linspace(0.0, model.horizon, model.grid_points)


def test_simulation_is_deterministic_for_fixed_seed():
    model = sis_model(dirac(3))
    net = generate_configuration_network(model.degree, 500, seed=11)
    a = simulate_gillespie(net, model, seed=12)
    b = simulate_gillespie(net, model, seed=12)
    assert np.array_equal(a.trajectory.globals, b.trajectory.globals)
    assert np.array_equal(a.node_state, b.node_state)
    assert a.events == b.events


def test_neighbor_cache_stays_coherent_and_mass_conserved():
    model = sis_model(
        {"type": "powerlaw", "gamma": 2.5, "kmin": 1, "kmax": 15},
        horizon=5.0,
    )
    net = generate_configuration_network(model.degree, 1000, seed=13)
    for max_events in (0, 1, 17, 1000, 20_000):
        run = simulate_gillespie(net, model, seed=14, max_events=max_events)
        fresh = neighbor_counts(net, run.node_state, model.num_states)
        assert np.array_equal(run.m_counts, fresh)
        counts = run.trajectory.globals * net.n_nodes
        assert np.allclose(counts.sum(axis=1), net.n_nodes)


def test_trajectory_fractions_well_formed():
    model = sis_model(dirac(4), horizon=3.0)
    net = generate_configuration_network(model.degree, 2000, seed=15)
    run = simulate_gillespie(net, model, seed=16)
    g = run.trajectory.globals
    assert np.all(g >= 0) and np.all(g <= 1)
    assert np.allclose(g.sum(axis=1), 1.0)
    assert run.trajectory.globals.shape == (model.grid_points, 2)
    assert run.events > 0


def test_absorbing_state_ends_run_early():
    model = make_model(
        ["I", "R"], [("I", "R", "5.0")], dirac(1), {"I": 0.5, "R": 0.5},
        horizon=50.0, grid_points=11,
    )
    net = generate_configuration_network(model.degree, 200, seed=17)
    run = simulate_gillespie(net, model, seed=18)
    assert run.trajectory.globals[-1, 0] == 0.0  # everyone recovered
    assert np.all(run.node_state == 1)
    # exactly one event per initially infected node
    assert run.events == round(net.n_nodes - run.trajectory.globals[0, 1] * net.n_nodes)


def test_average_runs_single_run_has_zero_spread():
    model = sis_model(dirac(2), horizon=1.0, grid_points=6)
    avg = average_runs(model, 300, runs=1, seed=19)
    assert np.all(avg.stds == 0.0)
    assert avg.meta["runs"] == 1


def test_average_runs_deterministic_and_shrinking_spread():
    model = sis_model(dirac(2), horizon=1.0, grid_points=6)
    a = average_runs(model, 300, runs=4, seed=20)
    b = average_runs(model, 300, runs=4, seed=20)
    assert np.array_equal(a.globals, b.globals)
    assert np.array_equal(a.stds, b.stds)
    assert np.allclose(a.globals.sum(axis=1), 1.0)
    assert np.all(a.stds >= 0)
    assert len(a.meta["events"]) == 4


def test_average_runs_requires_positive_runs():
    model = sis_model(dirac(2))
    with pytest.raises(ValueError):
        average_runs(model, 100, runs=0)
