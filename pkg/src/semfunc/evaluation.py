"""Evaluation metrics and dataset-level evaluation drivers."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .corpus import RelpronEntry, SimilarityPair
from .errors import InputError, UndefinedCorrelationError
from .inference import RelpronProperty, relpron_score, similarity
from .meanfield import MeanFieldSettings
from .model import WorldModel

THREADS_ENV = "SEMFUNC_THREADS"


def spearman(gold: Sequence[float], predicted: Sequence[float]) -> float:
    """Pearson correlation of fractional ranks (ties share their average rank)."""
    if len(gold) != len(predicted):
        raise InputError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    if len(gold) < 2:
        raise InputError("need at least two items for a rank correlation")
    a = rankdata(np.asarray(gold, dtype=float))
    b = rankdata(np.asarray(predicted, dtype=float))
    a -= a.mean()
    b -= b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        raise UndefinedCorrelationError("ranks have zero variance")
    return float(min(1.0, max(-1.0, float(a @ b) / denom)))


def average_precision(ranked: Sequence, gold) -> float:
    gold = set(gold)
    hits, total = 0, 0.0
    for rank, item in enumerate(ranked, 1):
        if item in gold:
            hits += 1
            total += hits / rank
    return total / len(gold)


def mean_average_precision(ranked_lists: Sequence[Sequence], gold_sets: Sequence) -> tuple[float, list[int]]:
    """MAP over queries, plus the indices of queries that were excluded
    because their gold set is empty."""
    if len(ranked_lists) != len(gold_sets):
        raise InputError("one gold set per ranked list is required")
    aps, excluded = [], []
    for k, (ranked, gold) in enumerate(zip(ranked_lists, gold_sets)):
        gold = set(gold)
        if not gold:
            excluded.append(k)
            continue
        missing = gold.difference(ranked)
        if missing:
            raise InputError(f"query {k}: gold items not among candidates: {sorted(missing)[:3]}")
        aps.append(average_precision(ranked, gold))
    if not aps:
        raise InputError("no query has a gold item")
    return math.fsum(aps) / len(aps), excluded


@dataclass
class EvalReport:
    metric: str
    value: float
    coverage: float
    items: list[dict] = field(default_factory=list)
    excluded: int = 0

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "coverage": self.coverage,
            "excluded": self.excluded,
            "items": self.items,
        }

    def summary(self) -> str:
        value = "nan" if math.isnan(self.value) else f"{self.value:.4f}"
        return f"{self.metric}={value} coverage={self.coverage:.3f} items={len(self.items)}"


def worker_count() -> int:
    """Threads for item-level evaluation; ``SEMFUNC_THREADS`` caps it."""
    n = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if cap < 1:
            raise InputError(f"{THREADS_ENV} must be positive")
        n = min(n, cap)
    return max(1, n)


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map; results are identical for any worker count."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def evaluate_similarity(
    model: WorldModel, pairs: Sequence[SimilarityPair], settings=MeanFieldSettings(), workers=None
) -> EvalReport:
    """Spearman correlation between gold scores and model similarity over the
    in-vocabulary pairs."""
    scored = [p for p in pairs if p.in_vocab and p.word1 in model and p.word2 in model]
    preds = parallel_map(lambda p: similarity(model, p.word1, p.word2, settings), scored, workers)
    items = [
        {"id": f"{p.word1}|{p.word2}", "gold": p.score, "predicted": s} for p, s in zip(scored, preds)
    ]
    coverage = len(scored) / len(pairs) if pairs else 0.0
    value = spearman([p.score for p in scored], preds) if len(scored) >= 2 else math.nan
    return EvalReport("spearman", value, coverage, items)


def _property(e: RelpronEntry) -> RelpronProperty:
    return RelpronProperty(e.hypernym, e.verb, e.argument, e.term_role)


def _property_id(e: RelpronEntry) -> str:
    return f"{e.hypernym} {e.term_role} {e.verb} {e.argument}"


def evaluate_relpron(
    model: WorldModel,
    entries: Sequence[RelpronEntry],
    split: str | None = None,
    settings=MeanFieldSettings(),
    workers=None,
) -> EvalReport:
    """For each term, rank every property of the split by the term's score
    and compute average precision of the term's own properties; MAP over
    terms.  Entries with out-of-vocabulary words are skipped."""
    chosen = [e for e in entries if split is None or e.split == split]
    usable = [e for e in chosen if e.in_vocab and all(p in model for p in e.predicates())]
    terms = sorted({e.term for e in usable})
    props = list(dict.fromkeys((_property_id(e), _property(e)) for e in usable))

    def score_term(term):
        scores = [(pid, relpron_score(model, term, prop, settings)) for pid, prop in props]
        return sorted(scores, key=lambda s: (-s[1], s[0]))

    rankings = parallel_map(score_term, terms, workers)
    gold = [{_property_id(e) for e in usable if e.term == t} for t in terms]
    ranked = [[pid for pid, _ in r] for r in rankings]
    items = []
    for t, r, g in zip(terms, ranked, gold):
        ranks = sorted(r.index(pid) + 1 for pid in g)
        items.append({"id": t, "gold": sorted(g), "ranks": ranks, "ap": average_precision(r, g)})
    coverage = len(usable) / len(chosen) if chosen else 0.0
    value = mean_average_precision(ranked, gold)[0] if terms else math.nan
    return EvalReport("map", value, coverage, items)
