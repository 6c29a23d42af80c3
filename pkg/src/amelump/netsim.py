"""Ground-truth stochastic simulation of the contact process.

Networks come from the erased configuration model (i.i.d. degrees, uniform
stub matching, self-loops and duplicate edges removed).  Dynamics are
simulated exactly with the direct stochastic simulation algorithm: per-node
total rates live in a binary indexed (Fenwick) tree supporting O(log N)
selection and update, and each event updates only the chosen node and its
neighbors' cached neighbor-state counts.  Rate expressions are flattened to
small postfix programs so the hot loop stays inside compiled code.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rate_expr
from .solver import Trajectory

_CHUNK_EVENTS = 1 << 20


@dataclass(frozen=True)
class Network:
    """Undirected simple graph in CSR form."""

    indptr: np.ndarray  # (N+1,)
    indices: np.ndarray  # (2*|E|,)
    erased_edges: int  # self-loops/duplicates dropped during matching
    requested_edges: int  # stub pairs before erasure

    @property
    def n_nodes(self):
        return len(self.indptr) - 1

    @property
    def degrees(self):
        return np.diff(self.indptr)

    @property
    def erasure_loss(self):
        if self.requested_edges == 0:
            return 0.0
        return self.erased_edges / self.requested_edges

    def neighbors(self, u):
        return self.indices[self.indptr[u] : self.indptr[u + 1]]


def generate_configuration_network(dist, n_nodes, seed):
    """Erased configuration model: i.i.d. degrees, uniform stub matching.

    One node's degree is resampled until the degree sum is even; self-loops
    and duplicate edges are erased (their count is reported on the result).
    Deterministic for a fixed seed.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    degrees = rng.choice(dist.kmax + 1, size=n_nodes, p=dist.p)
    while degrees.sum() % 2 != 0:
        degrees[-1] = rng.choice(dist.kmax + 1, p=dist.p)
    stubs = np.repeat(np.arange(n_nodes), degrees)
    rng.shuffle(stubs)
    u, v = stubs[0::2], stubs[1::2]
    keep = u != v
    u, v = u[keep], v[keep]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
    erased = len(stubs) // 2 - len(edges)
    both = np.concatenate([edges, edges[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, both[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    return Network(
        indptr=indptr,
        indices=both[:, 1].astype(np.int64).copy(),
        erased_edges=int(erased),
        requested_edges=len(stubs) // 2,
    )


def _compiled_rules(model):
    """Rule table in flat-array form for the compiled kernel."""
    codes, operands, consts = [], [], []
    code_off, const_off = [0], [0]
    depth = 1
    for rule in model.rules:
        c, o, k, d = rate_expr.compile_program(rule.rate)
        codes.append(c)
        operands.append(o)
        consts.append(k)
        code_off.append(code_off[-1] + len(c))
        const_off.append(const_off[-1] + len(k))
        depth = max(depth, d)
    empty = np.zeros(0, dtype=np.int64)
    return (
        np.concatenate(codes) if codes else empty,
        np.concatenate(operands) if operands else empty,
        np.concatenate(consts) if consts else np.zeros(0),
        np.array(code_off, dtype=np.int64),
        np.array(const_off, dtype=np.int64),
        depth,
        np.array([model.states.index(r.frm) for r in model.rules], dtype=np.int64),
        np.array([model.states.index(r.to) for r in model.rules], dtype=np.int64),
    )


@njit(cache=True)
def _eval_program(codes, operands, consts, lo, hi, clo, m, k, stack):
    top = 0
    for i in range(lo, hi):
        op = codes[i]
        if op == 0:  # constant
            stack[top] = consts[clo + operands[i]]
            top += 1
        elif op == 1:  # neighbor count
            stack[top] = m[operands[i]]
            top += 1
        elif op == 2:  # degree
            stack[top] = k
            top += 1
        elif op == 7:  # negate
            stack[top - 1] = -stack[top - 1]
        else:
            b = stack[top - 1]
            a = stack[top - 2]
            top -= 1
            if op == 3:
                stack[top - 1] = a + b
            elif op == 4:
                stack[top - 1] = a - b
            elif op == 5:
                stack[top - 1] = a * b
            else:
                stack[top - 1] = a / b
    return stack[0]


@njit(cache=True)
def _node_rate(state, m, k, rule_from, codes, operands, consts, code_off,
               const_off, stack):
    total = 0.0
    for r in range(len(rule_from)):
        if rule_from[r] == state:
            total += _eval_program(
                codes, operands, consts,
                code_off[r], code_off[r + 1], const_off[r], m, k, stack,
            )
    return total


@njit(cache=True)
def _fw_build(rates):
    n = len(rates)
    tree = np.zeros(n + 1)
    for i in range(n):
        j = i + 1
        tree[j] += rates[i]
        parent = j + (j & -j)
        if parent <= n:
            tree[parent] += tree[j]
    return tree


@njit(cache=True)
def _fw_update(tree, i, delta):
    j = i + 1
    n = len(tree) - 1
    while j <= n:
        tree[j] += delta
        j += j & -j


@njit(cache=True)
def _fw_search(tree, value):
    """Smallest index i with prefix-sum through i exceeding `value`."""
    n = len(tree) - 1
    idx = 0
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] < value:
            idx = nxt
            value -= tree[nxt]
        bit >>= 1
    if idx >= n:
        idx = n - 1
    return idx


@njit(cache=True)
def _ssa_chunk(indptr, indices, node_state, m_counts, node_rate, state_counts,
               t_start, horizon, grid, grid_pos, out_counts,
               rule_from, rule_to, codes, operands, consts, code_off,
               const_off, stack, rule_rates, max_events, seed):
    """Run up to max_events events; returns (t, grid_pos, events, done).

    State arrays are updated in place, so the caller can resume (with a
    fresh seed) or inspect them between chunks.
    """
    np.random.seed(seed)
    n = len(node_state)
    tree = _fw_build(node_rate)
    total = 0.0
    for i in range(n):
        total += node_rate[i]
    t = t_start
    events = 0
    while events < max_events:
        if total <= 1e-300:
            t = horizon  # absorbing configuration
        else:
            t = t + np.random.exponential(1.0 / total)
        while grid_pos < len(grid) and grid[grid_pos] <= t:
            for s in range(state_counts.shape[0]):
                out_counts[grid_pos, s] = state_counts[s]
            grid_pos += 1
        if t >= horizon:
            return t, grid_pos, events, True

        # select node proportionally to rate, then a rule within the node
        node = _fw_search(tree, np.random.random() * total)
        s_old = node_state[node]
        k = float(indptr[node + 1] - indptr[node])
        node_total = 0.0
        for r in range(len(rule_from)):
            if rule_from[r] == s_old:
                rate = _eval_program(
                    codes, operands, consts,
                    code_off[r], code_off[r + 1], const_off[r],
                    m_counts[node], k, stack,
                )
                rule_rates[r] = rate
                node_total += rate
            else:
                rule_rates[r] = 0.0
        if node_total <= 0.0:
            # floating-point residue in the tree selected a dead node
            delta = -node_rate[node]
            node_rate[node] = 0.0
            _fw_update(tree, node, delta)
            total += delta
            continue
        pick = np.random.random() * node_total
        chosen = -1
        acc = 0.0
        for r in range(len(rule_from)):
            acc += rule_rates[r]
            if pick < acc:
                chosen = r
                break
        if chosen < 0:
            for r in range(len(rule_from) - 1, -1, -1):
                if rule_rates[r] > 0.0:
                    chosen = r
                    break
        s_new = rule_to[chosen]

        # apply the transition and refresh affected cached rates
        node_state[node] = s_new
        state_counts[s_old] -= 1
        state_counts[s_new] += 1
        new_rate = _node_rate(
            s_new, m_counts[node], k, rule_from,
            codes, operands, consts, code_off, const_off, stack,
        )
        delta = new_rate - node_rate[node]
        node_rate[node] = new_rate
        _fw_update(tree, node, delta)
        total += delta
        for j in range(indptr[node], indptr[node + 1]):
            nb = indices[j]
            m_counts[nb, s_old] -= 1
            m_counts[nb, s_new] += 1
            kk = float(indptr[nb + 1] - indptr[nb])
            nb_rate = _node_rate(
                node_state[nb], m_counts[nb], kk, rule_from,
                codes, operands, consts, code_off, const_off, stack,
            )
            delta = nb_rate - node_rate[nb]
            node_rate[nb] = nb_rate
            _fw_update(tree, nb, delta)
            total += delta
        events += 1
    return t, grid_pos, events, False


@dataclass
class SimRun:
    """One realization: the trajectory plus final microscopic state."""

    trajectory: Trajectory
    node_state: np.ndarray
    m_counts: np.ndarray
    events: int
    time: float


def initial_node_states(model, n_nodes, rng):
    """Node states drawn i.i.d. from the model's initial fractions."""
    return rng.choice(
        model.num_states, size=n_nodes, p=model.initial
    ).astype(np.int64)


def neighbor_counts(net, node_state, num_states):
    """Fresh per-node neighbor-state counts recomputed from adjacency."""
    m = np.zeros((net.n_nodes, num_states), dtype=np.int64)
    src = np.repeat(np.arange(net.n_nodes), np.diff(net.indptr))
    np.add.at(m, (src, node_state[net.indices]), 1)
    return m


def simulate_gillespie(net, model, horizon=None, grid_points=None, seed=0,
                       max_events=None):
    """Exact event-driven simulation; deterministic for a fixed seed.

    Returns a SimRun whose trajectory holds per-state global fractions on
    the uniform grid.  `max_events` truncates the run (for invariant
    checks); untruncated runs always cover the full horizon.
    """
    horizon = model.horizon if horizon is None else float(horizon)
    grid_points = model.grid_points if grid_points is None else int(grid_points)
    rng = np.random.default_rng(seed)
    node_state = initial_node_states(model, net.n_nodes, rng)
    m_counts = neighbor_counts(net, node_state, model.num_states)

    (codes, operands, consts, code_off, const_off, depth,
     rule_from, rule_to) = _compiled_rules(model)
    stack = np.zeros(max(depth, 1))
    rule_rates = np.zeros(max(len(model.rules), 1))
    degrees = net.degrees.astype(float)
    node_rate = np.zeros(net.n_nodes)
    for i in range(net.n_nodes):
        node_rate[i] = _node_rate(
            node_state[i], m_counts[i], degrees[i], rule_from,
            codes, operands, consts, code_off, const_off, stack,
        )
    state_counts = np.bincount(node_state, minlength=model.num_states)

    grid = np.linspace(0.0, horizon, grid_points)
    out_counts = np.zeros((grid_points, model.num_states), dtype=np.int64)
    t, grid_pos, events = 0.0, 0, 0
    budget = np.inf if max_events is None else int(max_events)
    chunk_seed = rng.integers(0, 2**31 - 1)
    while True:
        chunk = int(min(_CHUNK_EVENTS, budget - events))
        t, grid_pos, done_events, finished = _ssa_chunk(
            net.indptr, net.indices, node_state, m_counts, node_rate,
            state_counts, t, horizon, grid, grid_pos, out_counts,
            rule_from, rule_to, codes, operands, consts, code_off, const_off,
            stack, rule_rates, chunk, int(chunk_seed),
        )
        events += done_events
        chunk_seed = rng.integers(0, 2**31 - 1)
        if finished or events >= budget:
            break
    out_counts[grid_pos:] = state_counts  # absorbing/truncated tail
    traj = Trajectory(
        times=grid,
        globals=out_counts / net.n_nodes,
        state_names=model.states.names,
        meta={"events": events, "n_nodes": net.n_nodes, "seed": seed},
    )
    return SimRun(traj, node_state, m_counts, events, t)


def _worker_run(args):
    (model, dist, n_nodes, horizon, grid_points, net_seed, sim_seed) = args
    net = generate_configuration_network(dist, n_nodes, net_seed)
    run = simulate_gillespie(net, model, horizon, grid_points, sim_seed)
    return run.trajectory.globals, run.events, net.erasure_loss


def average_runs(model, n_nodes, runs=10, seed=0, horizon=None,
                 grid_points=None):
    """Pointwise mean and standard deviation over independent realizations.

    Each run gets its own network and dynamics seed, derived from the
    master seed.  Runs fan out over a process pool sized by the
    AMELUMP_WORKERS environment variable (default: CPU count).
    """
    if runs < 1:
        raise ValueError("need at least one run")
    horizon = model.horizon if horizon is None else float(horizon)
    grid_points = model.grid_points if grid_points is None else int(grid_points)
    seeds = np.random.SeedSequence(seed).generate_state(2 * runs)
    jobs = [
        (model, model.degree, n_nodes, horizon, grid_points,
         int(seeds[2 * i]), int(seeds[2 * i + 1]))
        for i in range(runs)
    ]
    workers = int(os.environ.get("AMELUMP_WORKERS", 0)) or (os.cpu_count() or 1)
    workers = min(workers, runs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker_run, jobs))
    else:
        results = [_worker_run(job) for job in jobs]
    stack = np.stack([g for g, _, _ in results])
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0, ddof=0)
    return Trajectory(
        times=np.linspace(0.0, horizon, grid_points),
        globals=mean,
        state_names=model.states.names,
        stds=sd,
        meta={
            "runs": runs,
            "n_nodes": n_nodes,
            "seed": seed,
            "events": [e for _, e, _ in results],
            "erasure_loss": [l for _, _, l in results],
        },
    )
