"""Exact inference by brute-force enumeration of the pixie space.

Only usable for small spaces, but exact: every approximation in the package is
checked against these functions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import TractabilityError, UndefinedConditionalError
from .model import GraphTopology, SpaceConfig, TruthCondition, WorldModel

DEFAULT_BUDGET = 10**7


@dataclass(frozen=True)
class ExactQueryResult:
    probability: float
    conditioning_mass: float


def enumerate_space(space: SpaceConfig, n_nodes: int = 1, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All binom(D, C) pixies as rows of an int8 array, in lexicographic order
    of their active index sets."""
    total = space.n_pixies**n_nodes
    if total > budget:
        raise TractabilityError(
            f"{space.n_pixies}^{n_nodes} = {total} joint configurations exceeds "
            f"the enumeration budget of {budget}"
        )
    X = np.zeros((space.n_pixies, space.dims), dtype=np.int8)
    for row, active in enumerate(itertools.combinations(range(space.dims), space.cardinality)):
        X[row, list(active)] = 1
    return X


def _truth_table(model, predicate, X, hard):
    k = model.index(predicate)
    t = expit(X @ model.weights[k] + model.biases[k])
    if hard:
        # footnote convention: truth iff t >= 0.5
        t = (t >= 0.5).astype(np.float64)
    return t


def _axis_vector(v, axis, ndim):
    shape = [1] * ndim
    shape[axis] = len(v)
    return v.reshape(shape)


class _Enumeration:
    """Joint prior weights of one topology over the enumerated space."""

    def __init__(self, model: WorldModel, topology: GraphTopology, budget=DEFAULT_BUDGET, hard=False):
        model.check_topology(topology)
        self.model = model
        self.topology = topology
        self.hard = hard
        n = len(topology.nodes)
        X = enumerate_space(model.space, n, budget)
        self.X = X
        Xf = X.astype(np.float64)
        logw = np.zeros((len(X),) * n)
        unary = Xf @ model.node_bias
        for k in range(n):
            logw = logw + _axis_vector(unary, k, n)
        for src, dst, label in topology.edges:
            s, d = topology.index(src), topology.index(dst)
            pair = Xf @ model.link(label) @ Xf.T
            shape = [1] * n
            shape[s] = shape[d] = len(X)
            if s > d:
                pair = pair.T
            logw = logw + pair.reshape(shape)
        # unnormalised; the common scale cancels in every ratio
        self.prior = np.exp(logw - logw.max())
        self.prior_total = self.prior.sum()

    def factor(self, conditions: Sequence[TruthCondition]):
        """Product of truth factors; conflicting assertions about one truth
        variable give an all-zero factor."""
        n = len(self.topology.nodes)
        seen = {}
        for c in conditions:
            self.model.index(c.predicate)
            key = (self.topology.index(c.node), c.predicate)
            if key in seen and seen[key] != bool(c.polarity):
                return np.zeros_like(self.prior)
            seen[key] = bool(c.polarity)
        f = np.ones_like(self.prior)
        for (axis, pred), polarity in sorted(seen.items()):
            t = _truth_table(self.model, pred, self.X, self.hard)
            f = f * _axis_vector(t if polarity else 1.0 - t, axis, n)
        return f

    def mass(self, conditions) -> float:
        return float((self.prior * self.factor(conditions)).sum() / self.prior_total)

    def posterior(self, conditions) -> np.ndarray:
        joint = self.prior * self.factor(conditions)
        total = joint.sum()
        if total == 0.0:
            raise UndefinedConditionalError("conditioning event has probability zero")
        return joint / total


def event_probability(
    model: WorldModel,
    topology: GraphTopology,
    conditions: Sequence[TruthCondition],
    budget: int = DEFAULT_BUDGET,
    hard: bool = False,
) -> float:
    """Prior probability that all ``conditions`` hold jointly."""
    return _Enumeration(model, topology, budget, hard).mass(conditions)


def exact_conditional_truth(
    model: WorldModel,
    topology: GraphTopology,
    conditions: Sequence[TruthCondition],
    query: TruthCondition,
    budget: int = DEFAULT_BUDGET,
    hard: bool = False,
) -> ExactQueryResult:
    model.check_conditions(topology, list(conditions) + [query])
    enum = _Enumeration(model, topology, budget, hard)
    cond_mass = enum.mass(conditions)
    if cond_mass == 0.0:
        raise UndefinedConditionalError("conditioning event has probability zero")
    joint_mass = enum.mass(list(conditions) + [query])
    return ExactQueryResult(probability=joint_mass / cond_mass, conditioning_mass=cond_mass)


def exact_posterior(model, topology, conditions, budget=DEFAULT_BUDGET, hard=False):
    """Returns ``(X, P)``: the enumerated pixies and the normalised joint
    posterior, an array with one axis per node."""
    model.check_conditions(topology, conditions)
    enum = _Enumeration(model, topology, budget, hard)
    return enum.X, enum.posterior(conditions)


def exact_posterior_marginals(
    model: WorldModel,
    topology: GraphTopology,
    conditions: Sequence[TruthCondition],
    budget: int = DEFAULT_BUDGET,
    hard: bool = False,
) -> dict:
    X, post = exact_posterior(model, topology, conditions, budget, hard)
    n = post.ndim
    out = {}
    for k, node in enumerate(topology.nodes):
        others = tuple(a for a in range(n) if a != k)
        p_node = post.sum(axis=others) if others else post
        out[node] = p_node @ X.astype(np.float64)
    return out


def sample_prior(model: WorldModel, topology: GraphTopology, n_samples: int, rng, max_tries=10**7,
                 batch=4096):
    """Draw joint pixie assignments from the prior by rejection sampling.

    Proposals are independent Bernoulli units (with the node bias as logit
    offset); a proposal is kept if every node has exactly C active units, then
    accepted with probability ``exp(link energy - bound)`` where ``bound`` is
    an upper bound on the link energy.  Proposals are drawn in batches.
    """
    D, C = model.space.dims, model.space.cardinality
    model.check_topology(topology)
    n = len(topology.nodes)
    p_on = expit(model.node_bias + math.log(C / (D - C)))
    # x^T W y adds up exactly C*C entries of W, so the largest C*C positive
    # entries bound the link energy of any valid assignment
    bound = 0.0
    for _, _, label in topology.edges:
        top = np.sort(model.link(label), axis=None)[::-1][: C * C]
        bound += float(np.clip(top, 0, None).sum())
    kept = []
    filled = tries = 0
    while filled < n_samples:
        if tries >= max_tries:
            raise TractabilityError("rejection sampler exceeded its proposal budget")
        m = min(batch, max_tries - tries)
        tries += m
        x = (rng.random((m, n, D)) < p_on).astype(np.int8)
        u = rng.random(m)
        valid = np.all(x.sum(axis=2) == C, axis=1)
        x, u = x[valid], u[valid]
        xf = x.astype(np.float64)
        energy = np.zeros(len(x))
        for src, dst, label in topology.edges:
            s, d = topology.index(src), topology.index(dst)
            energy += np.einsum("ki,ij,kj->k", xf[:, s], model.link(label), xf[:, d])
        acc = x[u < np.exp(energy - bound)]
        kept.append(acc[: n_samples - filled])
        filled += len(kept[-1])
    return np.concatenate(kept) if kept else np.zeros((0, n, D), dtype=np.int8)


# --- set-theoretic checks with hard classifiers ------------------------------


@dataclass(frozen=True)
class QuantifierReport:
    forall_holds: bool
    exists_holds: bool
    prob_statement_forall: bool
    prob_statement_exists: bool
    conditional: float | None
    agree: bool


def hard_extension(model: WorldModel, predicate: str, budget=DEFAULT_BUDGET) -> np.ndarray:
    """Boolean mask over :func:`enumerate_space` rows where the thresholded
    classifier is true."""
    X = enumerate_space(model.space, 1, budget)
    return _truth_table(model, predicate, X, hard=True).astype(bool)


def _hard_conditional(model, a, b, budget):
    top = GraphTopology.single()
    try:
        res = exact_conditional_truth(
            model, top, [TruthCondition("x", a)], TruthCondition("x", b), budget, hard=True
        )
    except UndefinedConditionalError:
        return None
    return res.probability


def check_quantifier_equivalence(model: WorldModel, a: str, b: str, budget=DEFAULT_BUDGET) -> QuantifierReport:
    """Compare set-theoretic "every A is B" / "some A is B" with the
    probability statements P(b|a) = 1 / P(b|a) > 0."""
    A = hard_extension(model, a, budget)
    B = hard_extension(model, b, budget)
    n_ab = int(np.sum(A & B))
    n_a_not_b = int(np.sum(A & ~B))
    exists_holds = n_ab > 0
    forall_holds = n_a_not_b == 0 and n_ab > 0

    p = _hard_conditional(model, a, b, budget)
    prob_forall = p is not None and p == 1.0
    prob_exists = p is not None and p > 0.0
    agree = (
        forall_holds == prob_forall
        and exists_holds == prob_exists
        and (not A.any()) == (p is None)
    )
    return QuantifierReport(forall_holds, exists_holds, prob_forall, prob_exists, p, agree)


def check_barbara(model: WorldModel, a: str, b: str, c: str, budget=DEFAULT_BUDGET) -> bool:
    """From P(b|a) = 1 and P(c|b) = 1 conclude P(c|a) = 1.

    Returns False only if both premises hold and the conclusion does not.
    """
    p_ab = _hard_conditional(model, a, b, budget)
    p_bc = _hard_conditional(model, b, c, budget)
    if p_ab != 1.0 or p_bc != 1.0:
        return True
    return _hard_conditional(model, a, c, budget) == 1.0


def measure_masses(model: WorldModel, a: str, b: str, budget=DEFAULT_BUDGET) -> dict:
    """P(A), P(A and B), P(A and not B) for the truth events of ``a`` and ``b``
    at a single pixie, each computed by its own enumeration sum."""
    enum = _Enumeration(model, GraphTopology.single(), budget)
    ta = TruthCondition("x", a)
    return {
        "A": enum.mass([ta]),
        "A_and_B": enum.mass([ta, TruthCondition("x", b)]),
        "A_not_B": enum.mass([ta, TruthCondition("x", b, False)]),
    }
