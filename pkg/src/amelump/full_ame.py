"""Generation and evaluation of the full master-equation system.

One scalar variable per (node state, neighborhood vector) pair.  The
right-hand side has four contributions: direct inflow/outflow through the
rules applied to the node itself, and indirect inflow/outflow through
neighbors changing state, mediated by the edge-transition rates beta.
"""

import numpy as np

from .errors import NumericalError
from .neighborhoods import DEFAULT_CAP, NeighborhoodIndex


class FullSystem:
    """Precomputed sparse structure for the full master equation.

    The state is an array of shape (num_states, |M|); `rhs` is suitable for
    handing to an ODE solver after flattening.
    """

    def __init__(self, model, nbh=None, cap=DEFAULT_CAP):
        self.model = model
        if nbh is None:
            nbh = NeighborhoodIndex(model.num_states, model.kmax, cap=cap)
        self.nbh = nbh
        self.num_states = model.num_states
        n = len(nbh)
        self.n_vectors = n
        mfloat = nbh.vectors.astype(float)
        self.m_values = mfloat
        kvals = nbh.degrees.astype(float)

        # per-rule rate over all neighborhoods
        self.rule_from = [model.states.index(r.frm) for r in model.rules]
        self.rule_to = [model.states.index(r.to) for r in model.rules]
        self.rate_values = np.array(
            [np.broadcast_to(r.rate.evaluate(mfloat, kvals), (n,)) for r in model.rules]
        ).reshape(len(model.rules), n)

        # aggregate rate per ordered state pair (s1, s2) with rules s1 -> s2
        self.pairs = []
        self.pair_rate = {}
        for i, r in enumerate(model.rules):
            key = (self.rule_from[i], self.rule_to[i])
            if key not in self.pair_rate:
                self.pair_rate[key] = np.zeros(n)
                self.pairs.append(key)
            self.pair_rate[key] += self.rate_values[i]

        # shift links m -> m^{s1+,s2-} for each pair, with multiplicity
        self.shift_src = {}
        self.shift_valid = {}
        self.shift_coef = {}
        for (s1, s2) in self.pairs:
            targets, valid = nbh.shift_indices(s1, s2)
            self.shift_src[(s1, s2)] = targets
            self.shift_valid[(s1, s2)] = valid
            coef = np.zeros(n)
            coef[valid] = mfloat[targets[valid], s1]
            self.shift_coef[(s1, s2)] = coef

    @property
    def size(self):
        """Number of scalar variables."""
        return self.num_states * self.n_vectors

    def initial_state(self):
        from .model import multinomial_initial_state

        return multinomial_initial_state(self.model, self.nbh)

    def betas(self, x):
        """Edge transition rates beta[s, (s1, s2)] computed fresh from x."""
        out = {}
        for (s1, s2) in self.pairs:
            weighted = x[s1] * self.pair_rate[(s1, s2)]
            num = self.m_values.T @ weighted  # per receiving state s
            den = self.m_values.T @ x[s1]
            beta = np.where(den != 0.0, num / np.where(den == 0.0, 1.0, den), 0.0)
            out[(s1, s2)] = beta
        return out

    def rhs(self, x):
        """Time derivative of x, shape (num_states, |M|)."""
        x = np.asarray(x)
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite state passed to the full system")
        dx = np.zeros_like(x)
        # direct rule flow between states, same neighborhood
        for i in range(len(self.rule_from)):
            flow = self.rate_values[i] * x[self.rule_from[i]]
            dx[self.rule_to[i]] += flow
            dx[self.rule_from[i]] -= flow
        # neighbor-induced flow within each degree slice
        betas = self.betas(x)
        for (s1, s2) in self.pairs:
            src = self.shift_src[(s1, s2)]
            valid = self.shift_valid[(s1, s2)]
            coef = self.shift_coef[(s1, s2)]
            beta = betas[(s1, s2)]
            for s in range(self.num_states):
                inflow = np.zeros(self.n_vectors)
                inflow[valid] = x[s][src[valid]] * coef[valid]
                dx[s] += beta[s] * inflow
                dx[s] -= beta[s] * (x[s] * self.m_values[:, s1])
        return dx

    def rhs_flat(self, t, y):
        """solve_ivp-compatible wrapper over a flattened state."""
        return self.rhs(y.reshape(self.num_states, self.n_vectors)).ravel()

    def global_fractions(self, x):
        """Per-state global fractions (sum over neighborhoods)."""
        return np.asarray(x).reshape(self.num_states, self.n_vectors).sum(axis=1)

    def degree_marginals(self, x):
        """Total mass per degree (sum over states and the degree slice)."""
        x = np.asarray(x).reshape(self.num_states, self.n_vectors)
        per_vector = x.sum(axis=0)
        return np.bincount(
            self.nbh.degrees, weights=per_vector, minlength=self.model.kmax + 1
        )


def build_full_ame(model, cap=DEFAULT_CAP):
    """Construct the full system; fails when |M| exceeds the cap."""
    return FullSystem(model, cap=cap)
