"""Initialisation from projected PPMI counts and variational training.

Each observed graph contributes a surrogate objective evaluated at two
mean-field states that are held fixed while differentiating:

* ``Q+`` conditioned on every observed predicate being true,
* ``Q~`` where each node takes the unconditioned vector it would have if its
  neighbours were frozen at ``Q+`` (its Markov blanket state).

    J = sum_n [ log t_p(q+_n) + sum_{c in negatives(n)} log(1 - t_c(q+_n)) ]
      + sum_{s -l-> d} ( q+_s' W_l q+_d - (q+_s' W_l q~_d + q~_s' W_l q+_d) / 2 )
      + node_bias . sum_n (q+_n - q~_n)
      - l2 * ( sum_touched |w_c|^2 + sum_labels |W_l|^2 )

The link and node-bias terms are a mean-field pseudo-likelihood: contrasting
against each node's blanket state rather than a single free state of the
whole graph keeps the contrast well defined when the prior has several modes.

Negatives are drawn with probability proportional to ``freq ** alpha``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .corpus import TripleRecord, Vocabulary
from .errors import ConfigurationError, InputError, TrainingDivergedError
from .inference import SV_TOPOLOGY, SVO_TOPOLOGY
from .meanfield import MeanFieldSettings, blanket_marginals, optimize
from .model import GraphTopology, SpaceConfig, TruthCondition, WorldModel

log = logging.getLogger(__name__)

LINK_LABELS = ("ARG1", "ARG2")
VO_TOPOLOGY = GraphTopology(("y", "z"), (("y", "z", "ARG2"),))


@dataclass(frozen=True)
class TrainingConfig:
    space: SpaceConfig = SpaceConfig(200, 20)
    learning_rate: float = 0.01
    epochs: int = 1
    negative_samples: int = 5
    l2_strength: float = 1e-4
    frequency_smoothing: float = 0.75
    seed: int = 0
    minibatch: int = 64
    gain: float = 1.0
    holdout_fraction: float = 0.05
    divergence_tolerance: float = 1.0
    inference: MeanFieldSettings = MeanFieldSettings(tolerance=1e-3, max_sweeps=20)
    # step size for link weights and node bias; None means learning_rate
    link_learning_rate: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.link_learning_rate is not None and not self.link_learning_rate > 0:
            raise ConfigurationError("link_learning_rate must be positive")
        if self.negative_samples < 0:
            raise ConfigurationError("negative_samples must be non-negative")
        if self.l2_strength < 0:
            raise ConfigurationError("l2_strength must be non-negative")
        if not 0 <= self.frequency_smoothing <= 1:
            raise ConfigurationError("frequency_smoothing must lie in [0, 1]")
        if self.epochs < 0 or self.minibatch < 1:
            raise ConfigurationError("epochs must be >= 0 and minibatch >= 1")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigurationError("holdout_fraction must lie in [0, 1)")


# --- count-based initialisation --------------------------------------------


@dataclass
class CooccurrenceCounts:
    predicates: list[str]
    counts: np.ndarray  # (n_predicates, dims)

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def _contexts(t: TripleRecord):
    """(predicate, context) pairs contributed by one triple."""
    if t.subject is not None:
        yield t.verb, f"ARG1\t{t.subject}"
        yield t.subject, f"ARG1^-1\t{t.verb}"
    if t.object is not None:
        yield t.verb, f"ARG2\t{t.object}"
        yield t.object, f"ARG2^-1\t{t.verb}"


def context_column(context: str, dims: int, seed: int) -> int:
    h = hashlib.blake2b(context.encode("utf-8"), digest_size=8, key=str(seed).encode())
    return int.from_bytes(h.digest(), "little") % dims


def project_counts(corpus: Sequence[TripleRecord], dims: int, seed: int, predicates=None) -> CooccurrenceCounts:
    """Random positive-only projection: each (link, neighbour) context is
    hashed to one of ``dims`` columns and its counts added there."""
    triples = [t.tagged() for t in corpus]
    if not triples:
        raise InputError("empty corpus")
    if predicates is None:
        predicates = list(dict.fromkeys(p for t in triples for p in t.predicates()))
    row = {p: k for k, p in enumerate(predicates)}
    counts = np.zeros((len(predicates), dims))
    columns: dict[str, int] = {}
    for t in triples:
        for pred, ctx in _contexts(t):
            if pred not in row:
                continue
            j = columns.get(ctx)
            if j is None:
                j = columns[ctx] = context_column(ctx, dims, seed)
            counts[row[pred], j] += 1
    return CooccurrenceCounts(list(predicates), counts)


def ppmi_transform(counts: CooccurrenceCounts) -> np.ndarray:
    n = counts.counts
    N = counts.total
    if N <= 0:
        raise InputError("no counts to transform")
    expected = np.outer(counts.row_totals, counts.col_totals) / N
    out = np.zeros_like(n)
    nz = n > 0
    out[nz] = np.maximum(0.0, np.log(n[nz] / expected[nz]))
    return out


def initialize_model(vocabulary: Vocabulary, config: TrainingConfig) -> WorldModel:
    """Semantic-function weights from the PPMI rows (times ``config.gain``),
    biases so every function is 0.5 at the mean pixie, links and node bias 0."""
    D, C = config.space.dims, config.space.cardinality
    if len(vocabulary) == 0:
        raise InputError("empty vocabulary")
    counts = project_counts(vocabulary.triples, D, config.seed, vocabulary.predicates)
    weights = config.gain * ppmi_transform(counts)
    biases = -(C / D) * weights.sum(axis=1)
    return WorldModel(
        space=config.space,
        predicates=tuple(vocabulary.predicates),
        weights=weights,
        biases=biases,
        freqs=np.array([vocabulary.counts[p] for p in vocabulary.predicates], dtype=np.float64),
        links={l: np.zeros((D, D)) for l in LINK_LABELS},
        node_bias=np.zeros(D),
    )


# --- objective ---------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """An observed graph: one predicate generated at each node."""

    topology: GraphTopology
    predicates: tuple  # aligned with topology.nodes

    @classmethod
    def from_triple(cls, t: TripleRecord) -> "Observation":
        t = t.tagged()
        if t.subject is not None and t.object is not None:
            return cls(SVO_TOPOLOGY, (t.subject, t.verb, t.object))
        if t.subject is not None:
            return cls(SV_TOPOLOGY, (t.subject, t.verb))
        return cls(VO_TOPOLOGY, (t.verb, t.object))

    def conditions(self) -> list[TruthCondition]:
        return [TruthCondition(n, p) for n, p in zip(self.topology.nodes, self.predicates)]


@dataclass
class Gradient:
    """Sparse gradient: only predicates and link labels that were touched."""

    weights: dict = field(default_factory=dict)  # predicate index -> (D,)
    biases: dict = field(default_factory=dict)  # predicate index -> float
    links: dict = field(default_factory=dict)  # label -> (D, D)
    node_bias: np.ndarray | None = None

    def add(self, other: "Gradient", scale: float = 1.0) -> None:
        for k, g in other.weights.items():
            if k in self.weights:
                self.weights[k] = self.weights[k] + scale * g
            else:
                self.weights[k] = scale * g
        for k, g in other.biases.items():
            self.biases[k] = self.biases.get(k, 0.0) + scale * g
        for k, g in other.links.items():
            if k in self.links:
                self.links[k] = self.links[k] + scale * g
            else:
                self.links[k] = scale * g
        if other.node_bias is not None:
            nb = scale * other.node_bias
            self.node_bias = nb if self.node_bias is None else self.node_bias + nb


@dataclass
class PreparedObservation:
    """Quantities held fixed while differentiating the surrogate."""

    observation: Observation
    q_plus: np.ndarray
    q_blanket: np.ndarray
    negatives: np.ndarray  # (n_nodes, k) predicate indices


def negative_distribution(model: WorldModel, alpha: float) -> np.ndarray:
    w = model.freqs**alpha
    return w / w.sum()


def prepare(model, observation, config: TrainingConfig, rng) -> PreparedObservation:
    for p in observation.predicates:
        model.index(p)
    plus = optimize(model, observation.topology, observation.conditions(), config.inference)
    q_blanket = blanket_marginals(model, observation.topology, plus.q)
    k = config.negative_samples
    n = len(observation.topology.nodes)
    if k > 0:
        p = negative_distribution(model, config.frequency_smoothing)
        negatives = rng.choice(len(p), size=(n, k), p=p)
    else:
        negatives = np.zeros((n, 0), dtype=np.int64)
    return PreparedObservation(observation, plus.q, q_blanket, negatives)


def _touched(model, prep):
    preds = {model.index(p) for p in prep.observation.predicates}
    preds.update(int(c) for c in prep.negatives.ravel())
    labels = {l for _, _, l in prep.observation.topology.edges}
    return sorted(preds), sorted(labels)


def surrogate_objective(model: WorldModel, prep: PreparedObservation, l2: float) -> float:
    obs = prep.observation
    top = obs.topology
    total = 0.0
    for n, p in enumerate(obs.predicates):
        q = prep.q_plus[n]
        k = model.index(p)
        total += float(log_expit(model.weights[k] @ q + model.biases[k]))
        for c in prep.negatives[n]:
            total += float(log_expit(-(model.weights[c] @ q + model.biases[c])))
    for src, dst, label in top.edges:
        s, d = top.index(src), top.index(dst)
        W = model.link(label)
        qs, qd, bs, bd = prep.q_plus[s], prep.q_plus[d], prep.q_blanket[s], prep.q_blanket[d]
        total += float(qs @ W @ qd - 0.5 * (qs @ W @ bd + bs @ W @ qd))
    total += float(model.node_bias @ (prep.q_plus.sum(axis=0) - prep.q_blanket.sum(axis=0)))
    preds, labels = _touched(model, prep)
    penalty = sum(float(model.weights[k] @ model.weights[k]) for k in preds)
    penalty += sum(float(np.sum(model.link(l) ** 2)) for l in labels)
    return total - l2 * penalty


def surrogate_gradient(model: WorldModel, prep: PreparedObservation, l2: float) -> Gradient:
    obs = prep.observation
    top = obs.topology
    g = Gradient()

    def bump(k, dz, q):
        g.weights[k] = g.weights.get(k, 0.0) + dz * q
        g.biases[k] = g.biases.get(k, 0.0) + dz

    for n, p in enumerate(obs.predicates):
        q = prep.q_plus[n]
        k = model.index(p)
        bump(k, float(expit(-(model.weights[k] @ q + model.biases[k]))), q)
        for c in prep.negatives[n]:
            bump(int(c), -float(expit(model.weights[c] @ q + model.biases[c])), q)
    for src, dst, label in top.edges:
        s, d = top.index(src), top.index(dst)
        qs, qd, bs, bd = prep.q_plus[s], prep.q_plus[d], prep.q_blanket[s], prep.q_blanket[d]
        outer = np.outer(qs, qd) - 0.5 * (np.outer(qs, bd) + np.outer(bs, qd))
        g.links[label] = g.links[label] + outer if label in g.links else outer
    g.node_bias = prep.q_plus.sum(axis=0) - prep.q_blanket.sum(axis=0)
    preds, labels = _touched(model, prep)
    for k in preds:
        g.weights[k] = g.weights[k] - 2.0 * l2 * model.weights[k]
    for l in labels:
        g.links[l] = g.links[l] - 2.0 * l2 * model.link(l)
    return g


def observation_objective(model: WorldModel, observation: Observation, config: TrainingConfig,
                          rng) -> tuple[float, Gradient]:
    """Objective of one observed graph and its gradient for touched parameters."""
    if config.negative_samples > 0 and len(model.predicates) == 0:
        raise InputError("cannot sample negatives from an empty vocabulary")
    prep = prepare(model, observation, config, rng)
    return surrogate_objective(model, prep, config.l2_strength), surrogate_gradient(
        model, prep, config.l2_strength
    )


# --- training loop ----------------------------------------------------------------


@dataclass(frozen=True)
class EpochDiagnostics:
    epoch: int
    mean_objective: float
    heldout_objective: float
    wall_time: float

    def log_line(self) -> str:
        return (
            f"epoch={self.epoch}\tobjective={self.mean_objective!r}\t"
            f"heldout={self.heldout_objective!r}\twall={self.wall_time:.3f}"
        )


class _Params:
    """Mutable copy of a model's trainable arrays."""

    def __init__(self, model: WorldModel):
        self.template = model
        self.weights = np.array(model.weights)
        self.biases = np.array(model.biases)
        self.links = {k: np.array(v) for k, v in model.links.items()}
        self.node_bias = np.array(model.node_bias)

    def model(self) -> WorldModel:
        return self.template.replace(
            weights=self.weights, biases=self.biases, links=self.links, node_bias=self.node_bias
        )

    def apply(self, g: Gradient, step: float, link_step: float) -> None:
        for k in sorted(g.weights):
            self.weights[k] += step * g.weights[k]
        for k in sorted(g.biases):
            self.biases[k] += step * g.biases[k]
        for l in sorted(g.links):
            self.links[l] += link_step * g.links[l]
        if g.node_bias is not None:
            self.node_bias += link_step * g.node_bias

    def finite(self) -> bool:
        arrays = [self.weights, self.biases, self.node_bias, *self.links.values()]
        return all(np.all(np.isfinite(a)) for a in arrays)


def mean_objective(model, observations, config, seed) -> float:
    if not observations:
        return math.nan
    rng = np.random.default_rng(seed)
    vals = [surrogate_objective(model, prepare(model, o, config, rng), config.l2_strength)
            for o in observations]
    return math.fsum(vals) / len(vals)


def train(
    model: WorldModel,
    corpus: Sequence[TripleRecord],
    config: TrainingConfig,
    progress: Callable[[EpochDiagnostics], None] | None = None,
) -> tuple[WorldModel, list[EpochDiagnostics]]:
    """Minibatch stochastic gradient ascent on the surrogate objective.

    Deterministic for a given ``config.seed``.  Diagnostics include an
    epoch-0 entry measured before any update.
    """
    missing = {p for t in corpus for p in t.tagged().predicates() if p not in model}
    if missing:
        raise InputError(f"corpus predicates missing from the model: {sorted(missing)[:5]}")
    observations = [Observation.from_triple(t) for t in corpus]
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(observations))
    n_hold = int(round(config.holdout_fraction * len(observations)))
    heldout = [observations[i] for i in order[:n_hold]]
    train_set = [observations[i] for i in order[n_hold:]]
    heldout_seed = config.seed + 1

    params = _Params(model)
    t0 = time.perf_counter()
    h0 = mean_objective(model, heldout, config, heldout_seed)
    diags = [EpochDiagnostics(0, math.nan, h0, time.perf_counter() - t0)]
    if progress:
        progress(diags[0])
    best = h0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(train_set))
        objs = []
        for start in range(0, len(perm), config.minibatch):
            batch = [train_set[i] for i in perm[start:start + config.minibatch]]
            current = params.model()
            total = Gradient()
            for obs in batch:
                prep = prepare(current, obs, config, rng)
                objs.append(surrogate_objective(current, prep, config.l2_strength))
                total.add(surrogate_gradient(current, prep, config.l2_strength))
            link_lr = config.link_learning_rate or config.learning_rate
            params.apply(total, config.learning_rate / len(batch), link_lr / len(batch))
            if not params.finite():
                raise TrainingDivergedError(
                    f"non-finite parameters in epoch {epoch} at example {start}", diags
                )
        current = params.model()
        h = mean_objective(current, heldout, config, heldout_seed)
        d = EpochDiagnostics(epoch, math.fsum(objs) / max(len(objs), 1), h, time.perf_counter() - t0)
        diags.append(d)
        log.info(d.log_line())
        if progress:
            progress(d)
        if heldout and h < best - config.divergence_tolerance:
            raise TrainingDivergedError(
                f"held-out objective fell from {best:.4f} to {h:.4f} in epoch {epoch}", diags
            )
        if not math.isnan(h):
            best = max(best, h)
    return params.model(), diags
