"""Consistency checks of a (small) model against exact enumeration.

Each suite returns a :class:`CheckResult`; ``run_oracle_checks`` runs them
all.  Used by the ``oracle-check`` command.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import UndefinedConditionalError
from .inference import implication_score
from .meanfield import MeanFieldSettings, MeanFieldState, inclusive_kl, optimize
from .model import GraphTopology, TruthCondition, WorldModel
from .oracle import (
    DEFAULT_BUDGET,
    check_barbara,
    check_quantifier_equivalence,
    enumerate_space,
    event_probability,
    exact_conditional_truth,
    exact_posterior,
    measure_masses,
)

EXACT_TOL = 1e-12
GAP_BOUND = 0.1
GAP_PASS_RATE = 0.9
_X = GraphTopology.single()


@dataclass
class CheckResult:
    suite: str
    passed: bool
    checked: int
    failures: int
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "checked": self.checked,
            "failures": self.failures,
            "detail": self.detail,
        }


def _t(p, polarity=True):
    return TruthCondition("x", p, polarity)


def _conditional(model, conds, query, budget):
    try:
        return exact_conditional_truth(model, _X, conds, query, budget).probability
    except UndefinedConditionalError:
        return None


def chain_rule(model, preds, budget=DEFAULT_BUDGET) -> CheckResult:
    """P(a and b) = P(a) P(b | a)."""
    fails = n = 0
    for a, b in itertools.permutations(preds, 2):
        p_a = event_probability(model, _X, [_t(a)], budget)
        p_ab = event_probability(model, _X, [_t(a), _t(b)], budget)
        cond = _conditional(model, [_t(a)], _t(b), budget)
        if cond is None:
            continue
        n += 1
        fails += abs(p_ab - p_a * cond) > EXACT_TOL
    return CheckResult("chain-rule", fails == 0, n, fails)


def self_conditioning(model, preds, budget=DEFAULT_BUDGET) -> CheckResult:
    fails = n = 0
    for a in preds:
        p = _conditional(model, [_t(a)], _t(a), budget)
        if p is None:
            continue
        n += 1
        fails += abs(p - 1.0) > EXACT_TOL
    return CheckResult("self-conditioning", fails == 0, n, fails)


def measure_equivalence(model, preds, budget=DEFAULT_BUDGET) -> CheckResult:
    """P(A) = P(A and B) + P(A and not B), each side summed separately."""
    fails = n = 0
    for a, b in itertools.permutations(preds, 2):
        m = measure_masses(model, a, b, budget)
        n += 1
        fails += abs(m["A"] - (m["A_and_B"] + m["A_not_B"])) > EXACT_TOL
    return CheckResult("measure-equivalence", fails == 0, n, fails)


def kl_improvement(model, preds, settings=MeanFieldSettings(), budget=DEFAULT_BUDGET) -> CheckResult:
    """The fitted mean-field state is no further from the exact posterior
    (inclusive KL) than the uniform starting point."""
    fails = n = 0
    for a in preds:
        cond = [_t(a)]
        try:
            X, post = exact_posterior(model, _X, cond, budget)
        except UndefinedConditionalError:
            continue
        fitted = optimize(model, _X, cond, settings)
        start = MeanFieldState(_X.nodes, model.space.uniform()[None, :])
        n += 1
        fails += inclusive_kl(X, post, fitted) > inclusive_kl(X, post, start) + EXACT_TOL
    return CheckResult("kl-improvement", fails == 0, n, fails)


def implication_gap(model, preds, settings=MeanFieldSettings(), budget=DEFAULT_BUDGET) -> CheckResult:
    """Mean-field implication scores within the gap bound of the exact
    conditional on at least the required fraction of ordered pairs."""
    n = close = 0
    worst = 0.0
    for a, b in itertools.permutations(preds, 2):
        exact = _conditional(model, [_t(a)], _t(b), budget)
        if exact is None:
            continue
        gap = abs(implication_score(model, a, b, settings) - exact)
        worst = max(worst, gap)
        n += 1
        close += gap <= GAP_BOUND
    ok = n == 0 or close >= GAP_PASS_RATE * n
    return CheckResult("implication-gap", ok, n, n - close, f"max gap {worst:.4f}")


def quantifier_equivalence(model, preds, budget=DEFAULT_BUDGET) -> CheckResult:
    fails = n = 0
    for a, b in itertools.permutations(preds, 2):
        n += 1
        fails += not check_quantifier_equivalence(model, a, b, budget).agree
    return CheckResult("quantifier-equivalence", fails == 0, n, fails)


def barbara(model, preds, budget=DEFAULT_BUDGET) -> CheckResult:
    fails = n = 0
    for a, b, c in itertools.permutations(preds, 3):
        n += 1
        fails += not check_barbara(model, a, b, c, budget)
    return CheckResult("barbara", fails == 0, n, fails)


def run_oracle_checks(
    model: WorldModel,
    budget: int = DEFAULT_BUDGET,
    max_predicates: int = 6,
    settings=MeanFieldSettings(),
) -> list[CheckResult]:
    """Run every suite over the first ``max_predicates`` predicates.

    Raises :class:`TractabilityError` up front if the space is too large.
    """
    enumerate_space(model.space, 1, budget)
    preds = list(model.predicates[:max_predicates])
    return [
        chain_rule(model, preds, budget),
        self_conditioning(model, preds, budget),
        measure_equivalence(model, preds, budget),
        kl_improvement(model, preds, settings, budget),
        implication_gap(model, preds, settings, budget),
        quantifier_equivalence(model, preds, budget),
        barbara(model, preds, budget),
    ]


def all_passed(results) -> bool:
    return all(r.passed for r in results)
