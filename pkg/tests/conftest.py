import numpy as np
import pytest

from amelump.model import (
    DegreeDistribution,
    model_from_dict,
    powerlaw_distribution,
    validate_model,
)


def make_model(states, rules, degree, initial, horizon=2.0, grid_points=41):
    doc = {
        "states": states,
        "rules": [{"from": f, "to": t, "rate": r} for f, t, r in rules],
        "degree": degree,
        "initial": initial,
        "horizon": horizon,
        "grid_points": grid_points,
    }
    return validate_model(model_from_dict(doc))


def uniform_degree(kmax, kmin=0):
    p = np.zeros(kmax + 1)
    p[kmin:] = 1.0 / (kmax + 1 - kmin)
    return {"type": "table", "p": p.tolist()}


@pytest.fixture
def sis_small():
    return make_model(
        ["S", "I"],
        [("S", "I", "1.2 * m[I]"), ("I", "S", "0.7")],
        uniform_degree(5, kmin=1),
        {"S": 0.8, "I": 0.2},
    )


@pytest.fixture
def sir_small():
    return make_model(
        ["S", "I", "R"],
        [("S", "I", "3.0 * m[I]"), ("I", "R", "2.0"), ("R", "S", "1.0")],
        {"type": "powerlaw", "gamma": 2.5, "kmin": 1, "kmax": 12},
        {"S": 0.5, "I": 0.25, "R": 0.25},
    )


@pytest.fixture
def constant_rate_model():
    # all rates constant: dynamics are independent of the neighborhood
    return make_model(
        ["A", "B"],
        [("A", "B", "0.9"), ("B", "A", "0.4")],
        {"type": "powerlaw", "gamma": 2.5, "kmin": 1, "kmax": 20},
        {"A": 0.7, "B": 0.3},
    )
