"""Partitioning of the neighborhood set into clusters.

The partition is the product of two independent factors: a contiguous
partition of the degrees (greedy agglomerative merge balancing probability
mass) and a partition of the unit simplex of degree-normalized neighborhood
directions into coordinate-interval cells.

At each degree, a cell corresponds to an integer box intersected with the
fixed-sum plane, so per-cell member counts, coordinate sums, and border
flows have closed forms (inclusion-exclusion over the box).  All cluster
statistics are therefore computed without ever iterating over individual
neighborhood vectors; clusterings over millions of vectors stay cheap.
Exact mode additionally materializes the membership map and per-member
weights needed to lump and reconstruct full states.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .neighborhoods import DEFAULT_CAP, NeighborhoodIndex, compositions, size_of_Mk


@dataclass(frozen=True)
class DegreePartition:
    """Contiguous degree intervals covering 0..kmax."""

    intervals: tuple  # (lo, hi) inclusive, ordered
    cost: float  # disparity cost of the partition

    @property
    def interval_of(self):
        out = np.empty(self.intervals[-1][1] + 1, dtype=np.int64)
        for idx, (lo, hi) in enumerate(self.intervals):
            out[lo : hi + 1] = idx
        return out


def cluster_degrees(dist, target):
    """Greedy bottom-up merge of adjacent degrees.

    Starts from singletons and repeatedly merges the adjacent pair whose
    merge increases the disparity cost sum((interval mass)^2) the least,
    i.e. the pair with the smallest mass product; ties break toward low
    degrees.  Stops at `target` intervals.
    """
    if target < 1:
        raise ValueError("target must be >= 1")
    intervals = [(k, k) for k in range(dist.kmax + 1)]
    masses = [float(dist.p[k]) for k in range(dist.kmax + 1)]
    while len(intervals) > target:
        products = [masses[i] * masses[i + 1] for i in range(len(masses) - 1)]
        i = int(np.argmin(products))  # argmin returns the first, lowest-degree tie
        intervals[i] = (intervals[i][0], intervals[i + 1][1])
        masses[i] += masses[i + 1]
        del intervals[i + 1], masses[i + 1]
    cost = float(sum(m * m for m in masses))
    return DegreePartition(tuple(intervals), cost)


def simplex_cell(m, p):
    """Cell key of a neighborhood vector on the direction simplex.

    Coordinate s falls in interval floor((m[s]/k)*p), with the last interval
    [(p-1)/p, 1] closed; degree-0 vectors get the all-zero key.  Integer
    arithmetic keeps the boundaries exact.
    """
    m = np.asarray(m, dtype=np.int64)
    k = int(m.sum())
    if k == 0:
        return tuple(0 for _ in m)
    return tuple(int(min((v * p) // k, p - 1)) for v in m)


def _cell_bounds(keys, k, p):
    """Integer count bounds [lo, hi] per coordinate for cells at degree k.

    Consecutive cells tile the counts exactly: hi of interval i is lo of
    interval i+1 minus one.
    """
    keys = np.asarray(keys, dtype=np.int64)
    lo = (k * keys + p - 1) // p
    hi = np.where(keys == p - 1, k, (k * (keys + 1) - 1) // p)
    return lo, hi


def _factorial(r):
    out = 1
    for i in range(2, r + 1):
        out *= i
    return out


def box_simplex_count(lo, hi, t):
    """Number of integer points m with lo <= m <= hi and sum(m) = t.

    Inclusion-exclusion over the box coordinates; `lo` and `hi` have shape
    (..., d), `t` broadcasts over the leading axes.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    d = lo.shape[-1]
    t = np.asarray(t)
    if d == 0:
        return np.where(t == 0, 1.0, 0.0)
    widths = hi - lo + 1
    rem = t - lo.sum(axis=-1)
    total = np.zeros(np.broadcast_shapes(rem.shape, widths.shape[:-1]))
    fact = _factorial(d - 1)
    for size in range(d + 1):
        for subset in combinations(range(d), size):
            x = rem.astype(float) - sum(widths[..., s] for s in subset)
            n = x + d - 1
            term = np.ones_like(n, dtype=float)
            for i in range(d - 1):
                term = term * (n - i)
            term = np.where(n >= d - 1, term / fact, 0.0)
            total = total + ((-1) ** size) * term
    return np.where((widths > 0).all(axis=-1), total, 0.0)


def _candidate_keys(num_states, p):
    blocks = []
    for t in range(max(0, p - num_states), p + 1):
        c = compositions(t, num_states)
        c = c[(c <= p - 1).all(axis=1)]
        if len(c):
            blocks.append(c)
    return np.vstack(blocks)


def cells_at_degree(k, p, num_states, candidates=None):
    """Cell keys containing at least one degree-k vector (exact test)."""
    if k == 0:
        return np.zeros((1, num_states), dtype=np.int64)
    if candidates is None:
        candidates = _candidate_keys(num_states, p)
    lo, hi = _cell_bounds(candidates, k, p)
    ok = (hi >= lo).all(axis=1) & (lo.sum(axis=1) <= k) & (hi.sum(axis=1) >= k)
    return candidates[ok]


def _box_coordinate_sums(lo, hi, k):
    """Per-coordinate sums of m[s] over all box points with sum(m) = k.

    Vectorized over cells: lo, hi of shape (n, d).  Fixes one coordinate to
    each admissible value and counts the rest.
    """
    n, d = lo.shape
    out = np.zeros((n, d))
    for s in range(d):
        others = [c for c in range(d) if c != s]
        lo_rest = lo[:, others]
        hi_rest = hi[:, others]
        max_width = int((hi[:, s] - lo[:, s]).max(initial=0))
        for off in range(max_width + 1):
            v = lo[:, s] + off
            active = v <= hi[:, s]
            if not active.any():
                break
            counts = box_simplex_count(lo_rest, hi_rest, k - v)
            out[:, s] += np.where(active, v * counts, 0.0)
    return out


class Clustering:
    """Joint degree/direction partition of the neighborhood set.

    Clusters are canonically ordered by (degree-interval index, cell key).
    Per-cluster per-degree member counts, coordinate sums (hence centers
    and weights), and shift-border flows are exact in both modes; exact
    mode additionally holds the member-level arrays.
    """

    def __init__(self, model, degree_target, p, mode="exact", nbh=None,
                 cap=DEFAULT_CAP):
        if p < 1:
            raise ValueError("p must be >= 1")
        self.model = model
        self.p = int(p)
        self.num_states = model.num_states
        self.kmax = model.kmax
        self.mode = mode
        self.dpart = cluster_degrees(model.degree, degree_target)
        self._interval_of = self.dpart.interval_of
        # P(k) / |M_k|, the unnormalized member weight at each degree
        self._base = np.array(
            [model.degree.p[k] / size_of_Mk(k, self.num_states)
             for k in range(self.kmax + 1)]
        )
        self._build_cells()
        if mode == "exact":
            if nbh is None:
                nbh = NeighborhoodIndex(self.num_states, self.kmax, cap=cap)
            self.nbh = nbh
            self._build_membership()
        elif mode == "approx":
            self.nbh = None
            self.membership = None
            self.member_weights = None
        else:
            raise ValueError(f"unknown mode {mode!r}")

    # -- construction ------------------------------------------------------

    def _key_code(self, intervals, keys):
        code = np.asarray(intervals, dtype=np.int64)
        for s in range(self.num_states):
            code = code * self.p + keys[..., s]
        return code

    def _build_cells(self):
        p, S = self.p, self.num_states
        candidates = _candidate_keys(S, p)
        per_degree = []  # (keys, lo, hi, counts, sums) per degree
        groups = {}
        for k in range(self.kmax + 1):
            keys = cells_at_degree(k, p, S, candidates)
            lo, hi = _cell_bounds(keys, k, p)
            if k == 0:
                counts = np.ones(1)
                sums = np.zeros((1, S))
            else:
                counts = box_simplex_count(lo, hi, k)
                sums = _box_coordinate_sums(lo, hi, k)
            per_degree.append((keys, counts, sums))
            interval = int(self._interval_of[k])
            for i in range(len(keys)):
                key_t = (interval, tuple(int(v) for v in keys[i]))
                entry = groups.setdefault(key_t, ([], [], []))
                entry[0].append(k)
                entry[1].append(float(counts[i]))
                entry[2].append(sums[i])
        items = sorted(groups.items())
        self.n_clusters = len(items)
        self.cluster_intervals = np.array([iv for (iv, _), _ in items], dtype=np.int64)
        self.cluster_keys = np.array([key for (_, key), _ in items], dtype=np.int64)
        self._key_to_cid = {key: c for c, (key, _) in enumerate(items)}
        self._degree_lists = [
            (np.array(ks, dtype=np.int64), np.array(cnt))
            for _, (ks, cnt, _) in items
        ]
        self._moment_lists = [np.array(sums) for _, (_, _, sums) in items]
        self.sizes = np.array([cnt.sum() for _, cnt in self._degree_lists])
        # per-degree cell -> cluster id, for border-link resolution
        self._cells_by_degree = []
        for k, (keys, _, _) in enumerate(per_degree):
            interval = int(self._interval_of[k])
            cids = np.array(
                [self._key_to_cid[(interval, tuple(int(v) for v in key))]
                 for key in keys],
                dtype=np.int64,
            )
            self._cells_by_degree.append((keys, cids))
        # normalization of the per-degree weights w_{C,k}
        denom = np.zeros(self.n_clusters)
        for c, (ks, cnt) in enumerate(self._degree_lists):
            denom[c] = float((cnt * self._base[ks]).sum())
        self._weight_denoms = denom
        centers = np.zeros((self.n_clusters, self.num_states))
        for c in range(self.n_clusters):
            ks, _ = self._degree_lists[c]
            wk = self.degree_weights(c)
            centers[c] = (wk[:, None] * self._moment_lists[c]).sum(axis=0)
        self.centers = centers

    def _build_membership(self):
        nbh = self.nbh
        p = self.p
        vecs = nbh.vectors
        k = nbh.degrees
        cells = np.zeros_like(vecs)
        pos = k > 0
        cells[pos] = np.minimum((vecs[pos] * p) // k[pos, None], p - 1)
        codes = self._key_code(self._interval_of[k], cells)
        cluster_codes = self._key_code(self.cluster_intervals, self.cluster_keys)
        order = np.argsort(cluster_codes)
        self.membership = order[np.searchsorted(cluster_codes[order], codes)]
        base_m = self._base[k]
        denom = self._weight_denoms[self.membership]
        uniform = denom == 0.0
        self.member_weights = np.where(
            uniform,
            1.0 / self.sizes[self.membership],
            base_m / np.where(uniform, 1.0, denom),
        )

    # -- queries -----------------------------------------------------------

    def degree_weights(self, cid):
        """Weights w_{C,k} over the cluster's degrees (aligned with ks)."""
        ks, counts = self._degree_lists[cid]
        base = self._base[ks]
        denom = self._weight_denoms[cid]
        if denom == 0.0:
            return np.full(len(ks), 1.0 / counts.sum())
        return base / denom

    def cluster_degree_list(self, cid):
        return self._degree_lists[cid]

    def cluster_of_vector(self, m):
        """Cluster id of a single neighborhood vector."""
        m = np.asarray(m, dtype=np.int64)
        interval = int(self._interval_of[int(m.sum())])
        return self._key_to_cid[(interval, simplex_cell(m, self.p))]

    def interval_mass_groups(self):
        """Cluster ids grouped by degree interval (for conservation checks)."""
        groups = {}
        for c in range(self.n_clusters):
            groups.setdefault(int(self.cluster_intervals[c]), []).append(c)
        return groups

    def _degree_weight_arrays(self):
        """w_{C,k} aligned with the per-degree cell lists."""
        out = []
        for k in range(self.kmax + 1):
            _, cids = self._cells_by_degree[k]
            denom = self._weight_denoms[cids]
            uniform = denom == 0.0
            w = np.where(
                uniform,
                1.0 / self.sizes[cids],
                self._base[k] / np.where(uniform, 1.0, denom),
            )
            out.append(w)
        return out

    def border_links(self, s1, s2):
        """Inter-cluster shift-flow matrix for a neighbor moving s1 -> s2.

        Entry (C, D) is sum over donor members m' in D whose shifted vector
        m'- e_{s1} + e_{s2} lands in C of w_{D,k} * m'[s1]: the coefficient
        of z_{s,D} in the inflow term of cluster C.  Within-cluster flow is
        omitted (it cancels between the in- and outflow terms).  Computed
        per degree from the cell boxes: a donor member exits its cell when
        its s1 count sits at the cell's lower bound or its s2 count at the
        upper bound, and each exit face maps to one adjacent cell.
        """
        p, S = self.p, self.num_states
        weights = self._degree_weight_arrays()
        rows, cols, data = [], [], []

        def lookup(k, keys):
            codes = self._key_code(self._interval_of[k], keys)
            ref_keys, ref_cids = self._cells_by_degree[k]
            ref_codes = self._key_code(self._interval_of[k], ref_keys)
            order = np.argsort(ref_codes)
            return ref_cids[order[np.searchsorted(ref_codes[order], codes)]]

        def emit(k, mask, dest_keys, donor_cids, amounts):
            mask = mask & (amounts != 0.0)
            if not mask.any():
                return
            dest = lookup(k, dest_keys[mask])
            rows.extend(dest.tolist())
            cols.extend(donor_cids[mask].tolist())
            data.extend(amounts[mask].tolist())

        for k in range(1, self.kmax + 1):
            keys, cids = self._cells_by_degree[k]
            lo, hi = _cell_bounds(keys, k, p)
            w = weights[k]
            others = [c for c in range(S) if c not in (s1, s2)]
            lo_rest = lo[:, others]
            hi_rest = hi[:, others]
            # interval index of the shifted coordinate values (one below the
            # cell's s1 floor, one above its s2 ceiling); with cells narrower
            # than one count unit this can skip several indices
            key_below = np.minimum((np.maximum(lo[:, s1] - 1, 0) * p) // k, p - 1)
            key_above = np.minimum(((hi[:, s2] + 1) * p) // k, p - 1)

            # exit through the lower s1 face only: m'[s1] = lo[s1],
            # m'[s2] < hi[s2], so only the s1 coordinate changes cell
            lo2 = lo[:, s2]
            hi2 = hi[:, s2] - 1
            counts = box_simplex_count(
                np.concatenate([lo_rest, lo2[:, None]], axis=1),
                np.concatenate([hi_rest, hi2[:, None]], axis=1),
                k - lo[:, s1],
            )
            amounts = w * lo[:, s1] * counts
            dest_keys = keys.copy()
            dest_keys[:, s1] = key_below
            emit(k, (lo[:, s1] >= 1) & (hi2 >= lo2), dest_keys, cids, amounts)

            # exit through the upper s2 face only: m'[s2] = hi[s2],
            # m'[s1] > lo[s1]
            sums = np.zeros(len(keys))
            max_width = int((hi[:, s1] - lo[:, s1]).max(initial=0))
            for off in range(1, max_width + 1):
                v = lo[:, s1] + off
                active = v <= hi[:, s1]
                if not active.any():
                    break
                counts = box_simplex_count(lo_rest, hi_rest, k - hi[:, s2] - v)
                sums += np.where(active, v * counts, 0.0)
            amounts = w * sums
            dest_keys = keys.copy()
            dest_keys[:, s2] = key_above
            emit(k, hi[:, s2] < k, dest_keys, cids, amounts)

            # exit through both faces (corner members)
            counts = box_simplex_count(lo_rest, hi_rest, k - lo[:, s1] - hi[:, s2])
            amounts = w * lo[:, s1] * counts
            dest_keys = keys.copy()
            dest_keys[:, s1] = key_below
            dest_keys[:, s2] = key_above
            emit(k, (lo[:, s1] >= 1) & (hi[:, s2] < k), dest_keys, cids, amounts)

        W = sp.coo_matrix(
            (data, (rows, cols)), shape=(self.n_clusters, self.n_clusters)
        ).tocsr()
        return W
