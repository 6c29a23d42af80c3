"""Construction and evaluation of the lumped master-equation system.

One scalar variable per (node state, cluster).  All sums over cluster
members are precomputed at build time, either exactly (iterating over the
materialized neighborhood set) or approximately (evaluating rates at cluster
centers and modeling inter-cluster probability flow through cluster borders
only), so a right-hand-side evaluation costs O(#clusters * |S|^2).
"""

import math

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError
from .full_ame import FullSystem
from .neighborhoods import compositions, size_of_Mk


class LumpedSystem:
    """Precomputed coefficients of the lumped equations."""

    def __init__(self, model, clustering, rule_terms, pair_terms, mode):
        self.model = model
        self.clustering = clustering
        self.num_states = model.num_states
        self.n_clusters = clustering.n_clusters
        self.rule_from = [model.states.index(r.frm) for r in model.rules]
        self.rule_to = [model.states.index(r.to) for r in model.rules]
        self.rule_terms = rule_terms  # per rule: vector over clusters
        self.pair_terms = pair_terms  # pair -> (W, out_coef, bnum)
        self.centers = clustering.centers
        self.mode = mode

    @property
    def size(self):
        return self.num_states * self.n_clusters

    def betas(self, z):
        out = {}
        for pair, (_, _, bnum) in self.pair_terms.items():
            s1 = pair[0]
            num = z[s1] @ bnum
            den = z[s1] @ self.centers
            out[pair] = np.where(den != 0.0, num / np.where(den == 0.0, 1.0, den), 0.0)
        return out

    def rhs(self, z):
        """Time derivative of z, shape (num_states, n_clusters)."""
        z = np.asarray(z)
        if not np.all(np.isfinite(z)):
            raise NumericalError("non-finite state passed to the lumped system")
        dz = np.zeros_like(z)
        for i in range(len(self.rule_from)):
            flow = self.rule_terms[i] * z[self.rule_from[i]]
            dz[self.rule_to[i]] += flow
            dz[self.rule_from[i]] -= flow
        betas = self.betas(z)
        for pair, (W, out_coef, _) in self.pair_terms.items():
            beta = betas[pair]
            for s in range(self.num_states):
                dz[s] += beta[s] * (W @ z[s] - out_coef * z[s])
        return dz

    def rhs_flat(self, t, y):
        return self.rhs(y.reshape(self.num_states, self.n_clusters)).ravel()

    def global_fractions(self, z):
        return np.asarray(z).reshape(self.num_states, self.n_clusters).sum(axis=1)


def lump_initial_state(x0, clustering):
    """Cluster-wise sums of a full state; total mass preserved exactly."""
    memb = clustering.membership
    if memb is None:
        raise ValueError("lumping a full state requires an exact-mode clustering")
    x0 = np.asarray(x0)
    return np.vstack([
        np.bincount(memb, weights=x0[s], minlength=clustering.n_clusters)
        for s in range(x0.shape[0])
    ])


def unlump_full(z, clustering):
    """Full state reconstructed per the within-cluster weight assumption."""
    memb = clustering.membership
    if memb is None:
        raise ValueError("reconstruction requires an exact-mode clustering")
    z = np.asarray(z)
    return z[:, memb] * clustering.member_weights[None, :]


def unlump_globals(z):
    """Per-state global fractions from a lumped state."""
    return np.asarray(z).sum(axis=1)


def initial_lumped_state(model, clustering):
    """Initial lumped state from independent multinomial neighbor states.

    Streams one degree slice at a time, so it works for clusterings whose
    neighborhood set is never materialized as a whole.
    """
    S = model.num_states
    z = np.zeros((S, clustering.n_clusters))
    interval_of = clustering.dpart.interval_of
    with np.errstate(divide="ignore"):
        log_x = np.log(model.initial)
    for k in range(model.kmax + 1):
        pk = model.degree.p[k]
        vecs = compositions(k, S)
        log_fact = np.array([math.lgamma(v + 1) for v in range(k + 2)])
        logp = np.full(len(vecs), log_fact[k])
        impossible = np.zeros(len(vecs), dtype=bool)
        for s in range(S):
            logp -= log_fact[vecs[:, s]]
            pos = vecs[:, s] > 0
            logp[pos] += vecs[pos, s] * log_x[s]
            impossible |= pos & (model.initial[s] == 0.0)
        prob = np.where(impossible, 0.0, np.exp(logp))
        total = prob.sum()
        if total > 0:
            prob /= total
        if k == 0:
            cells = np.zeros_like(vecs)
        else:
            cells = np.minimum((vecs * clustering.p) // k, clustering.p - 1)
        interval = int(interval_of[k])
        code = np.zeros(len(vecs), dtype=np.int64)
        for s in range(S):
            code = code * clustering.p + cells[:, s]
        uniq, inverse = np.unique(code, return_inverse=True)
        mass = np.bincount(inverse, weights=prob, minlength=len(uniq))
        for u, cell_mass in zip(uniq, mass):
            digits = []
            v = int(u)
            for _ in range(S):
                digits.append(v % clustering.p)
                v //= clustering.p
            key = tuple(reversed(digits))
            cid = clustering._key_to_cid[(interval, key)]
            z[:, cid] += model.initial * (pk * cell_mass)
    return z


def build_lumped_exact(model, clustering):
    """Lumped system with every member sum computed exactly."""
    if clustering.membership is None:
        raise ValueError("exact build requires an exact-mode clustering")
    full = FullSystem(model, nbh=clustering.nbh)
    memb = clustering.membership
    w = clustering.member_weights
    nC = clustering.n_clusters
    mfloat = full.m_values

    rule_terms = [
        np.bincount(memb, weights=w * full.rate_values[i], minlength=nC)
        for i in range(len(model.rules))
    ]
    pair_terms = {}
    for pair in full.pairs:
        s1, s2 = pair
        src = full.shift_src[pair]
        valid = full.shift_valid[pair]
        rows = memb[valid]
        cols = memb[src[valid]]
        data = w[src[valid]] * full.shift_coef[pair][valid]
        W = sp.coo_matrix((data, (rows, cols)), shape=(nC, nC)).tocsr()
        out_coef = np.asarray(W.sum(axis=0)).ravel()
        bnum = np.column_stack([
            np.bincount(memb, weights=full.pair_rate[pair] * w * mfloat[:, s],
                        minlength=nC)
            for s in range(model.num_states)
        ])
        pair_terms[pair] = (W, out_coef, bnum)
    return LumpedSystem(model, clustering, rule_terms, pair_terms, "exact")


def build_lumped_approx(model, clustering):
    """Lumped system generated from cluster geometry, never from members.

    Rule and edge-rate sums are approximated by evaluating the rate at the
    cluster center; the within-cluster shift flow cancels between the in-
    and outflow terms and is dropped, so only flow across cluster borders
    remains.  Border flow coefficients follow from the per-degree cell
    boxes in closed form, so no neighborhood vector is ever enumerated.
    """
    centers = clustering.centers
    nC = clustering.n_clusters
    mean_degree = centers.sum(axis=1)

    rule_terms = [
        np.broadcast_to(
            np.asarray(r.rate.evaluate(centers, mean_degree), dtype=float), (nC,)
        ).copy()
        for r in model.rules
    ]
    pairs = {}
    for i, r in enumerate(model.rules):
        key = (model.states.index(r.frm), model.states.index(r.to))
        pairs.setdefault(key, np.zeros(nC))
        pairs[key] += rule_terms[i]

    pair_terms = {}
    for pair, rate_at_center in pairs.items():
        s1, s2 = pair
        W = clustering.border_links(s1, s2)
        out_coef = np.asarray(W.sum(axis=0)).ravel()
        bnum = rate_at_center[:, None] * centers
        pair_terms[pair] = (W, out_coef, bnum)
    return LumpedSystem(model, clustering, rule_terms, pair_terms, "approx")
