"""Contact-process model declaration, validation, and initial states.

A model consists of a finite ordered set of node states, transition rules
(from-state, to-state, rate expression over the neighborhood), a degree
distribution, per-state initial global fractions, and a time horizon.
"""

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import rate_expr
from .errors import RateEvalError, RateSyntaxError, ValidationError
from .neighborhoods import size_of_Mk

NORM_TOL = 1e-12


@dataclass(frozen=True)
class StateSet:
    """Ordered set of distinct state labels; the order is canonical."""

    names: tuple

    def __post_init__(self):
        if len(self.names) == 0:
            raise ValueError("state set must be non-empty")

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name):
        return self.names.index(name)


@dataclass(frozen=True)
class Rule:
    """Transition rule: nodes in `frm` move to `to` at rate `rate` (1/time)."""

    frm: str
    to: str
    rate: rate_expr.Expr
    rate_text: str


class DegreeDistribution:
    """Probability table P(k) for k = 0..kmax."""

    def __init__(self, probabilities):
        self.p = np.asarray(probabilities, dtype=float)
        self.kmax = len(self.p) - 1

    def __getitem__(self, k):
        return self.p[k]

    def mean_degree(self):
        return float(np.arange(self.kmax + 1) @ self.p)

    def check(self):
        problems = []
        if np.any(self.p < 0):
            problems.append("degree distribution has negative entries")
        elif abs(self.p.sum() - 1.0) > NORM_TOL:
            problems.append(
                f"degree distribution not normalized (sum = {self.p.sum()!r})"
            )
        return problems


def powerlaw_distribution(gamma, kmin=1, kmax=None):
    """Truncated power law P(k) = k^(-gamma)/Z on kmin..kmax, 0 elsewhere."""
    if kmax is None or not (1 <= kmin <= kmax):
        raise ValueError("require 1 <= kmin <= kmax")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    k = np.arange(kmax + 1, dtype=float)
    p = np.zeros(kmax + 1)
    p[kmin:] = k[kmin:] ** (-gamma)
    p /= p.sum()
    return DegreeDistribution(p)


@dataclass
class ModelSpec:
    """Raw, unvalidated model description (e.g. straight from JSON)."""

    states: list
    rules: list  # (from, to, rate_text) triples
    degree: DegreeDistribution
    initial: dict  # state -> fraction
    horizon: float = 5.0
    grid_points: int = 101
    source_digest: str = ""


@dataclass(frozen=True)
class ValidatedModel:
    """Canonicalized model; immutable and safe to share."""

    states: StateSet
    rules: tuple
    degree: DegreeDistribution
    initial: np.ndarray  # per-state fractions, in state order
    horizon: float
    grid_points: int
    source_digest: str = ""

    @property
    def num_states(self):
        return len(self.states)

    @property
    def kmax(self):
        return self.degree.kmax

    def rules_into(self, s):
        """Rules producing state s."""
        return [r for r in self.rules if r.to == s]

    def rules_out_of(self, s):
        """Rules consuming state s."""
        return [r for r in self.rules if r.frm == s]


def _probe_negative_rate(rule, states, kmax, samples=128):
    """Sample neighborhoods and report if the rate ever goes negative."""
    rng = np.random.default_rng(12345)
    num_states = len(states)
    probes = [np.zeros(num_states, dtype=float)]
    probes.extend(np.eye(num_states) * kmax)
    for _ in range(samples):
        m = rng.multinomial(rng.integers(0, kmax + 1), np.full(num_states, 1.0 / num_states))
        probes.append(m.astype(float))
    for m in probes:
        try:
            val = rate_expr.eval_rate(rule.rate, m, float(m.sum()))
        except RateEvalError as exc:
            return f"rule {rule.frm}->{rule.to}: rate fails to evaluate ({exc})"
        if val < 0:
            return (
                f"rule {rule.frm}->{rule.to}: negative rate {val!r} at "
                f"neighborhood {tuple(int(v) for v in m)}"
            )
    return None


def validate_model(spec) -> ValidatedModel:
    """Canonicalize a model spec or raise with every violation found."""
    if isinstance(spec, ValidatedModel):
        return spec
    problems = []
    names = tuple(spec.states)
    if len(set(names)) != len(names):
        problems.append("state labels are not unique")
    if len(names) == 0:
        problems.append("state set is empty")
    if any(not n for n in names):
        problems.append("state labels must be non-empty")
    if problems:
        raise ValidationError(problems)
    states = StateSet(names)

    rules = []
    for frm, to, text in spec.rules:
        if frm not in names:
            problems.append(f"rule {frm}->{to}: unknown state '{frm}'")
        if to not in names:
            problems.append(f"rule {frm}->{to}: unknown state '{to}'")
        if frm == to:
            problems.append(f"self-rule {frm}->{to} is not allowed")
        try:
            tree = rate_expr.parse_rate(text, states)
        except RateSyntaxError as exc:
            problems.append(f"rule {frm}->{to}: {exc}")
            continue
        if frm in names and to in names and frm != to:
            rules.append(Rule(frm, to, tree, text))

    problems.extend(spec.degree.check())

    initial = np.zeros(len(names))
    for name, frac in spec.initial.items():
        if name not in names:
            problems.append(f"initial condition references unknown state '{name}'")
            continue
        initial[states.index(name)] = frac
    if np.any(initial < 0):
        problems.append("initial fractions must be nonnegative")
    if abs(initial.sum() - 1.0) > NORM_TOL:
        problems.append(f"initial not normalized (sum = {initial.sum()!r})")

    if not spec.horizon > 0:
        problems.append("horizon must be positive")
    if spec.grid_points < 2:
        problems.append("grid_points must be at least 2")

    if not problems:
        for rule in rules:
            issue = _probe_negative_rate(rule, states, spec.degree.kmax)
            if issue:
                problems.append(issue)

    if problems:
        raise ValidationError(problems)
    return ValidatedModel(
        states=states,
        rules=tuple(rules),
        degree=spec.degree,
        initial=initial,
        horizon=float(spec.horizon),
        grid_points=int(spec.grid_points),
        source_digest=getattr(spec, "source_digest", ""),
    )


def multinomial_initial_state(model, nbh):
    """Initial full state from statistically independent neighbor states.

    x[s, m] = x_s(0) * P(k_m) * Multinomial(k_m; m) * prod_s' x_s'(0)^m[s'],
    which preserves both total mass and the per-degree marginals exactly.
    """
    vectors = nbh.vectors
    degrees = nbh.degrees
    log_fact = np.array([math.lgamma(k + 1) for k in range(nbh.kmax + 1)])
    log_coeff = log_fact[degrees] - sum(
        log_fact[vectors[:, s]] for s in range(nbh.num_states)
    )
    with np.errstate(divide="ignore"):
        log_x = np.log(model.initial)
    log_prob = log_coeff.astype(float)
    for s in range(nbh.num_states):
        pos = vectors[:, s] > 0
        log_prob[pos] += vectors[pos, s] * log_x[s]
    # zero probability if some m[s] > 0 while x_s(0) = 0
    impossible = np.zeros(len(vectors), dtype=bool)
    for s in range(nbh.num_states):
        impossible |= (vectors[:, s] > 0) & (model.initial[s] == 0.0)
    neigh_prob = np.where(impossible, 0.0, np.exp(log_prob))
    # renormalize each degree slice to remove residual floating-point drift
    for k in range(nbh.kmax + 1):
        sl = nbh.slice_of_degree(k)
        total = neigh_prob[sl].sum()
        if total > 0:
            neigh_prob[sl] /= total
    base = model.degree.p[degrees] * neigh_prob
    x0 = np.outer(model.initial, base)
    return x0


def load_model(path) -> ValidatedModel:
    """Load and validate a model from its JSON file format."""
    with open(path, "rb") as fh:
        raw = fh.read()
    doc = json.loads(raw)
    spec = model_from_dict(doc)
    spec.source_digest = hashlib.sha256(raw).hexdigest()
    return validate_model(spec)


def model_from_dict(doc) -> ModelSpec:
    deg = doc["degree"]
    if deg.get("type") == "powerlaw":
        dist = powerlaw_distribution(deg["gamma"], deg.get("kmin", 1), deg["kmax"])
    elif deg.get("type") == "table":
        dist = DegreeDistribution(deg["p"])
    else:
        raise ValidationError([f"unknown degree distribution type {deg.get('type')!r}"])
    rules = [(r["from"], r["to"], r["rate"]) for r in doc["rules"]]
    return ModelSpec(
        states=list(doc["states"]),
        rules=rules,
        degree=dist,
        initial=dict(doc["initial"]),
        horizon=doc.get("horizon", 5.0),
        grid_points=doc.get("grid_points", 101),
    )


def builtin_model_path(name):
    """Filesystem path of a model shipped with the package (e.g. 'sir')."""
    return resources.files("amelump").joinpath("models", f"{name}.json")
