"""Semantic queries answered with mean-field inference.

All queries condition on predicate *truth* at pixie nodes; predicate
frequencies play no role here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InputError
from .meanfield import MeanFieldSettings, approximate_truth, optimize
from .model import GraphTopology, TruthCondition, WorldModel

SBJ, OBJ = "SBJ", "OBJ"

# subject x <-ARG1- verb y -ARG2-> object z
SVO_TOPOLOGY = GraphTopology(("x", "y", "z"), (("y", "x", "ARG1"), ("y", "z", "ARG2")))
SV_TOPOLOGY = GraphTopology(("x", "y"), (("y", "x", "ARG1"),))


@dataclass(frozen=True)
class QueryGraph:
    topology: GraphTopology
    conditions: tuple
    target: tuple  # (node, predicate)

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "target", tuple(self.target))
        self.topology.index(self.target[0])


@dataclass(frozen=True)
class RelpronProperty:
    hypernym: str
    verb: str
    argument: str
    term_role: str

    def __post_init__(self):
        if self.term_role not in (SBJ, OBJ):
            raise InputError(f"term role must be SBJ or OBJ, got {self.term_role!r}")


def implication_score(model: WorldModel, a: str, b: str, settings=MeanFieldSettings()) -> float:
    """Mean-field estimate of P(t_b | t_a) at a single pixie: the degree to
    which ``a`` implies ``b``."""
    f_b = model.function(b)
    model.index(a)
    top = GraphTopology.single()
    state = optimize(model, top, [TruthCondition("x", a)], settings)
    return approximate_truth(f_b, state, "x")


def similarity(model: WorldModel, a: str, b: str, settings=MeanFieldSettings()) -> float:
    """Product of the implication scores in both directions (two separate
    optimisations)."""
    return implication_score(model, a, b, settings) * implication_score(model, b, a, settings)


def graph_conditional_query(model: WorldModel, query: QueryGraph, settings=MeanFieldSettings()) -> float:
    node, predicate = query.target
    f = model.function(predicate)
    state = optimize(model, query.topology, query.conditions, settings)
    return approximate_truth(f, state, node)


def relpron_query(term: str, prop: RelpronProperty) -> QueryGraph:
    term_node, other_node = ("x", "z") if prop.term_role == SBJ else ("z", "x")
    conditions = (
        TruthCondition(term_node, prop.hypernym),
        TruthCondition("y", prop.verb),
        TruthCondition(other_node, prop.argument),
    )
    return QueryGraph(SVO_TOPOLOGY, conditions, (term_node, term))


def relpron_score(model: WorldModel, term: str, prop: RelpronProperty, settings=MeanFieldSettings()) -> float:
    """Probability that ``term`` is true of the head pixie of a property such
    as "device that astronomer uses" (hypernym, verb, other argument)."""
    for p in (term, prop.hypernym, prop.verb, prop.argument):
        model.index(p)
    return graph_conditional_query(model, relpron_query(term, prop), settings)


def rank_terms(
    model: WorldModel, candidates: Sequence[str], prop: RelpronProperty, settings=MeanFieldSettings()
) -> list[tuple[str, float]]:
    """Candidates sorted by descending score, ties in lexicographic order.

    The mean-field state does not depend on the term, so it is computed once.
    """
    if not candidates:
        raise InputError("no candidate terms")
    for p in candidates:
        model.index(p)
    query = relpron_query(candidates[0], prop)
    state = optimize(model, query.topology, query.conditions, settings)
    node = query.target[0]
    scored = [(t, approximate_truth(model.function(t), state, node)) for t in candidates]
    return sorted(scored, key=lambda ts: (-ts[1], ts[0]))
