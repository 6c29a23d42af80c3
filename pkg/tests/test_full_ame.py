import numpy as np
import pytest

from amelump.full_ame import build_full_ame
from amelump.model import multinomial_initial_state
from amelump.neighborhoods import (
    NeighborhoodIndex,
    ame_equation_count,
    shift,
)
from amelump.rate_expr import eval_rate
from conftest import make_model, uniform_degree


def reference_rhs(model, nbh, x):
    """Independent loop-based expansion of the master-equation terms."""
    S = model.num_states
    n = len(nbh)
    vecs = [tuple(v) for v in nbh.vectors]
    index = {m: i for i, m in enumerate(vecs)}
    rules = [
        (model.states.index(r.frm), model.states.index(r.to), r.rate)
        for r in model.rules
    ]

    def beta(s, s1, s2):
        num = den = 0.0
        for i, m in enumerate(vecs):
            weight = x[s1, i] * m[s]
            den += weight
            rate = sum(
                eval_rate(expr, np.array(m, float), float(sum(m)))
                for f, t, expr in rules if (f, t) == (s1, s2)
            )
            num += rate * weight
        return num / den if den != 0.0 else 0.0

    pairs = sorted({(f, t) for f, t, _ in rules})
    betas = {(s, p): beta(s, *p) for s in range(S) for p in pairs}

    dx = np.zeros_like(x)
    for s in range(S):
        for i, m in enumerate(vecs):
            marr, k = np.array(m, float), float(sum(m))
            for f, t, expr in rules:
                rate = eval_rate(expr, marr, k)
                if t == s:
                    dx[s, i] += rate * x[f, i]
                if f == s:
                    dx[s, i] -= rate * x[s, i]
            for (s1, s2) in pairs:
                b = betas[(s, (s1, s2))]
                source = shift(m, s1, s2)
                if source is not None:
                    j = index[source]
                    dx[s, i] += b * x[s, j] * source[s1]
                dx[s, i] -= b * x[s, i] * m[s1]
    return dx


@pytest.mark.parametrize("kmax", [1, 2, 3])
def test_rhs_matches_hand_expanded_two_state_system(kmax):
    model = make_model(
        ["S", "I"],
        [("S", "I", "1.3 * m[I]"), ("I", "S", "0.6")],
        uniform_degree(kmax),
        {"S": 0.7, "I": 0.3},
    )
    system = build_full_ame(model)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.random((2, system.n_vectors))
        x /= x.sum()
        expect = reference_rhs(model, system.nbh, x)
        assert np.abs(system.rhs(x) - expect).max() < 1e-14


def test_variable_counts(sis_small, sir_small):
    assert build_full_ame(sis_small).size == ame_equation_count(5, 2)
    assert build_full_ame(sir_small).size == ame_equation_count(12, 3)


def test_two_state_kmax2_has_twelve_variables():
    model = make_model(
        ["S", "I"], [("S", "I", "1.0 * m[I]"), ("I", "S", "1.0")],
        uniform_degree(2), {"S": 0.5, "I": 0.5},
    )
    assert build_full_ame(model).size == 12


def test_no_rules_gives_zero_rhs():
    model = make_model(
        ["A", "B"], [], uniform_degree(3), {"A": 0.5, "B": 0.5}
    )
    system = build_full_ame(model)
    x = np.full((2, system.n_vectors), 1.0 / (2 * system.n_vectors))
    assert np.all(system.rhs(x) == 0.0)


def test_absorbing_configuration_is_fixed_point():
    # all mass in a state no rule consumes, with no active neighbors
    model = make_model(
        ["S", "I", "R"],
        [("S", "I", "3.0 * m[I]"), ("I", "R", "2.0")],
        uniform_degree(4, kmin=1),
        {"S": 0.5, "I": 0.25, "R": 0.25},
    )
    system = build_full_ame(model)
    x = np.zeros((3, system.n_vectors))
    r = 2
    no_i_neighbors = system.nbh.vectors[:, 1] == 0
    x[r, no_i_neighbors] = 1.0
    x /= x.sum()
    assert np.abs(system.rhs(x)).max() == 0.0


def test_zero_rate_disables_infection_flow(sis_small):
    model = make_model(
        ["S", "I"],
        [("S", "I", "0.0 * m[I]"), ("I", "S", "0.5")],
        uniform_degree(5, kmin=1),
        {"S": 0.8, "I": 0.2},
    )
    system = build_full_ame(model)
    x = system.initial_state()
    dx = system.rhs(x)
    # the S->I direct flow is zero: all-S mass only grows
    pure_s = system.nbh.vectors[:, 1] == 0
    assert np.all(dx[0, pure_s] >= 0)


def test_mass_and_degree_conservation(sir_small):
    system = build_full_ame(sir_small)
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.random((3, system.n_vectors))
        x /= x.sum()
        dx = system.rhs(x)
        assert abs(dx.sum()) < 1e-12
        for k in range(sir_small.kmax + 1):
            sl = system.nbh.slice_of_degree(k)
            assert abs(dx[:, sl].sum()) < 1e-12


def test_rhs_at_initial_state_conserves(sir_small):
    system = build_full_ame(sir_small)
    dx = system.rhs(system.initial_state())
    assert abs(dx.sum()) < 1e-12


def test_edge_rate_bounds(sir_small):
    # rates linear with coefficient 3.0: edge rates stay in [0, 3*kmax]
    system = build_full_ame(sir_small)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.random((3, system.n_vectors))
        x /= x.sum()
        betas = system.betas(x)
        for pair, b in betas.items():
            assert np.all(b >= 0)
            assert np.all(b <= 3.0 * sir_small.kmax + 1e-9)


def test_zero_denominator_edge_rate_is_zero():
    model = make_model(
        ["S", "I"],
        [("S", "I", "1.0 * m[I]"), ("I", "S", "0.5")],
        uniform_degree(2),
        {"S": 1.0, "I": 0.0},
    )
    system = build_full_ame(model)
    x = np.zeros((2, system.n_vectors))
    x[0, 0] = 1.0  # all mass on isolated susceptible nodes
    betas = system.betas(x)
    for b in betas.values():
        assert np.all(b == 0.0)


def test_global_fractions(sir_small):
    system = build_full_ame(sir_small)
    x0 = system.initial_state()
    assert system.global_fractions(x0) == pytest.approx(
        sir_small.initial, abs=1e-12
    )
    assert np.all(system.global_fractions(np.zeros_like(x0)) == 0.0)


def test_degree_marginals_match_distribution(sir_small):
    system = build_full_ame(sir_small)
    x0 = system.initial_state()
    assert system.degree_marginals(x0) == pytest.approx(
        sir_small.degree.p, abs=1e-12
    )


def test_degree_marginals_dirac():
    model = make_model(
        ["S", "I"], [("S", "I", "1.0 * m[I]"), ("I", "S", "1.0")],
        {"type": "table", "p": [0, 0, 0, 0, 0, 1.0]},
        {"S": 0.5, "I": 0.5},
    )
    system = build_full_ame(model)
    marg = system.degree_marginals(system.initial_state())
    assert marg[5] == pytest.approx(1.0, abs=1e-12)
    assert marg[:5] == pytest.approx(np.zeros(5), abs=1e-12)
