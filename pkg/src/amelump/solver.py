"""Trajectory integration, solution distance, and the refinement heuristic.

Integration uses an adaptive explicit Runge-Kutta pair (Dormand-Prince via
scipy) with dense output sampled on a uniform grid.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .clustering import Clustering
from .errors import NumericalError
from .full_ame import build_full_ame
from .lumped_ame import build_lumped_approx, build_lumped_exact, initial_lumped_state

NEGATIVE_ABORT = -1e-6


@dataclass
class SolverConfig:
    rtol: float = 1e-6
    atol: float = 1e-10
    max_steps: int = 1_000_000
    first_step: float | None = None

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class Trajectory:
    """Globals per state on a uniform time grid, plus optional snapshots."""

    times: np.ndarray  # (T,)
    globals: np.ndarray  # (T, S)
    state_names: tuple
    states: np.ndarray | None = None  # (T, dim) raw solver state, optional
    stds: np.ndarray | None = None  # (T, S) per-state std over runs, optional
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.globals = np.asarray(self.globals, dtype=float)


def integrate(rhs, y0, horizon, grid_points, config=None):
    """Integrate dy/dt = rhs(t, y) over [0, horizon] on a uniform grid."""
    config = config or SolverConfig()
    y0 = np.asarray(y0, dtype=float).ravel()
    if not np.all(np.isfinite(y0)):
        raise NumericalError("non-finite initial state")
    if abs(y0.sum() - 1.0) > 1e-9:
        raise NumericalError(f"initial state not normalized (sum = {y0.sum()!r})")
    grid = np.linspace(0.0, horizon, grid_points)
    kwargs = {}
    if config.first_step is not None:
        kwargs["first_step"] = config.first_step
    sol = solve_ivp(
        rhs, (0.0, horizon), y0, method="RK45", t_eval=grid,
        rtol=config.rtol, atol=config.atol, **kwargs,
    )
    if not sol.success:
        raise NumericalError(f"integration failed: {sol.message}")
    if sol.t.size and hasattr(sol, "nfev") and sol.nfev > config.max_steps:
        raise NumericalError("step budget exhausted")
    states = sol.y.T
    worst = states.min()
    if worst < NEGATIVE_ABORT:
        t_bad = grid[int(np.argmin(states.min(axis=1)))]
        raise NumericalError(
            f"state entry fell to {worst!r} at t = {t_bad}; tolerances too loose"
        )
    return grid, states


def trajectory_distance(a: Trajectory, b: Trajectory) -> float:
    """Max over grid times of the Euclidean distance between global fractions."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise ValueError("trajectories are on different time grids")
    if a.state_names != b.state_names:
        raise ValueError("trajectories have different state sets")
    diff = a.globals - b.globals
    return float(np.sqrt((diff**2).sum(axis=1)).max())


def solve_full(model, config=None, keep_states=False, cap=None):
    """Solve the full master equation; returns (Trajectory, FullSystem)."""
    kwargs = {} if cap is None else {"cap": cap}
    system = build_full_ame(model, **kwargs)
    x0 = system.initial_state()
    grid, states = integrate(
        system.rhs_flat, x0, model.horizon, model.grid_points, config
    )
    glob = np.vstack([system.global_fractions(row) for row in states])
    traj = Trajectory(
        times=grid, globals=glob, state_names=model.states.names,
        states=states if keep_states else None,
        meta={"variables": system.size},
    )
    return traj, system


def solve_lumped(model, clustering=None, degree_target=None, p=None,
                 approx=False, config=None, keep_states=False, cap=None):
    """Build and solve the lumped system for one clustering."""
    if clustering is None:
        mode = "approx" if approx else "exact"
        kwargs = {} if cap is None else {"cap": cap}
        clustering = Clustering(model, degree_target, p, mode=mode, **kwargs)
    if approx:
        system = build_lumped_approx(model, clustering)
    else:
        system = build_lumped_exact(model, clustering)
    z0 = initial_lumped_state(model, clustering)
    grid, states = integrate(
        system.rhs_flat, z0, model.horizon, model.grid_points, config
    )
    glob = np.vstack([system.global_fractions(row) for row in states])
    traj = Trajectory(
        times=grid, globals=glob, state_names=model.states.names,
        states=states if keep_states else None,
        meta={"variables": system.size, "clusters": clustering.n_clusters},
    )
    return traj, system


def auto_lump_solve(model, c0=10, r=1.3, eps_stop=0.01, mode="exact",
                    config=None, max_iterations=25, cap=None):
    """Iteratively refine the clustering until consecutive solutions agree.

    Solves with |K| = |P| = c_i, c_{i+1} = round(r * c_i), and stops when
    the distance between consecutive solutions drops below eps_stop.
    Returns (final trajectory, final clustering, iteration log), where the
    log holds one (c_i, cluster count, epsilon) row per iteration (epsilon
    is NaN for the first, incomparable iteration).
    """
    if c0 < 1 or r <= 1 or eps_stop <= 0:
        raise ValueError("require c0 >= 1, r > 1, eps_stop > 0")
    approx = mode == "approx"
    c = int(c0)
    previous = None
    log = []
    for _ in range(max_iterations):
        clustering = Clustering(
            model, c, c, mode="approx" if approx else "exact",
            **({} if cap is None else {"cap": cap}),
        )
        traj, _ = solve_lumped(
            model, clustering=clustering, approx=approx, config=config
        )
        eps = math.nan if previous is None else trajectory_distance(previous[0], traj)
        log.append({"c": c, "clusters": clustering.n_clusters, "epsilon": eps})
        if previous is not None and eps < eps_stop:
            return traj, clustering, log
        previous = (traj, clustering)
        c = max(c + 1, round(r * c))
    raise NumericalError(
        f"refinement heuristic did not converge within {max_iterations} iterations"
    )


def sweep(model, start=5, end=20, approx=False, config=None, reference=None,
          cap=None):
    """Error curve: solve for |K| = |P| = c, c = start..end.

    Returns rows of (c, clusters, epsilon vs reference, surrogate epsilon vs
    previous solution).  When no reference trajectory is given, the finest
    computed lumping serves as the reference.
    """
    solutions = []
    for c in range(start, end + 1):
        traj, system = solve_lumped(
            model, degree_target=c, p=c, approx=approx, config=config, cap=cap
        )
        solutions.append((c, system.n_clusters, traj))
    ref = reference if reference is not None else solutions[-1][2]
    rows = []
    prev = None
    for c, n_clusters, traj in solutions:
        surrogate = math.nan if prev is None else trajectory_distance(prev, traj)
        rows.append({
            "c": c,
            "clusters": n_clusters,
            "epsilon": trajectory_distance(ref, traj),
            "surrogate": surrogate,
        })
        prev = traj
    return rows
