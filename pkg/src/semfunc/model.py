"""Model types: pixie space, semantic functions, link weights and the world model.

A *pixie* is a binary vector of length ``dims`` with exactly ``cardinality``
active units.  Pixies attached to the nodes of a graph are jointly distributed
according to a cardinality restricted Boltzmann machine (one weight matrix per
link label, plus a per-dimension bias shared by all nodes).  Each predicate has
a semantic function, a logistic unit giving the probability that the predicate
is true of a pixie.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .errors import DegenerateDistributionError, InputError

FORMAT_VERSION = 1


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpaceConfig:
    dims: int
    cardinality: int

    def __post_init__(self):
        if int(self.dims) != self.dims or int(self.cardinality) != self.cardinality:
            raise InputError("dims and cardinality must be integers")
        if not 0 < self.cardinality < self.dims:
            raise InputError(
                f"need 0 < cardinality < dims, got C={self.cardinality}, D={self.dims}"
            )

    @property
    def n_pixies(self) -> int:
        return math.comb(self.dims, self.cardinality)

    def uniform(self) -> np.ndarray:
        """The mean pixie: every dimension active with probability C/D."""
        return np.full(self.dims, self.cardinality / self.dims)


@dataclass(frozen=True)
class PixieVector:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
            raise InputError("a pixie must be a 1-d binary vector")
        object.__setattr__(self, "bits", _frozen(bits, np.int8))

    @classmethod
    def from_active(cls, active: Iterable[int], space: SpaceConfig) -> "PixieVector":
        bits = np.zeros(space.dims, dtype=np.int8)
        bits[list(active)] = 1
        pixie = cls(bits)
        pixie.validate(space)
        return pixie

    def validate(self, space: SpaceConfig) -> None:
        if len(self.bits) != space.dims:
            raise InputError(f"pixie has length {len(self.bits)}, expected {space.dims}")
        if int(self.bits.sum()) != space.cardinality:
            raise InputError(
                f"pixie has {int(self.bits.sum())} active units, expected {space.cardinality}"
            )


@dataclass(frozen=True)
class SemanticFunction:
    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1:
            raise InputError("semantic function weights must be a vector")
        if not (np.all(np.isfinite(w)) and math.isfinite(self.bias)):
            raise InputError("semantic function parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    def __call__(self, x) -> float:
        return evaluate_semantic_function(self, x)


def _as_input(x, dims):
    if isinstance(x, PixieVector):
        x = x.bits
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dims,):
        raise InputError(f"input has shape {x.shape}, expected ({dims},)")
    return x


def evaluate_semantic_function(f: SemanticFunction, x) -> float:
    """Probability of truth, ``logistic(w . x + b)``.

    ``x`` may be a binary pixie or a relaxed mean-field vector in [0, 1]^D.
    """
    x = _as_input(x, len(f.weights))
    return float(expit(float(f.weights @ x) + f.bias))


def log_truth(f: SemanticFunction, x) -> float:
    x = _as_input(x, len(f.weights))
    return float(log_expit(float(f.weights @ x) + f.bias))


@dataclass(frozen=True)
class LinkWeights:
    label: str
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError(f"link {self.label!r}: matrix must be square")
        if not np.all(np.isfinite(m)):
            raise InputError(f"link {self.label!r}: non-finite weights")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class TruthCondition:
    node: str
    predicate: str
    polarity: bool = True


@dataclass(frozen=True)
class GraphTopology:
    """Pixie nodes and labelled directed links ``(source, target, label)``."""

    nodes: tuple
    edges: tuple = ()

    def __post_init__(self):
        nodes = tuple(self.nodes)
        edges = tuple(tuple(e) for e in self.edges)
        if len(set(nodes)) != len(nodes):
            raise InputError("duplicate node ids")
        known = set(nodes)
        for src, dst, _label in edges:
            if src not in known or dst not in known:
                raise InputError(f"edge ({src}, {dst}) references an unknown node")
            if src == dst:
                raise InputError(f"self-loop at node {src}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def single(cls, node="x") -> "GraphTopology":
        return cls((node,))

    def index(self, node) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise InputError(f"unknown node {node!r}") from None

    def components(self) -> list[list]:
        parent = {n: n for n in self.nodes}

        def find(n):
            while parent[n] != n:
                parent[n] = parent[parent[n]]
                n = parent[n]
            return n

        for src, dst, _ in self.edges:
            parent[find(src)] = find(dst)
        groups: dict = {}
        for n in self.nodes:
            groups.setdefault(find(n), []).append(n)
        return list(groups.values())


@dataclass(frozen=True, eq=False)
class WorldModel:
    """Full parameter set.

    Semantic functions are stored row-wise: ``weights[k]`` and ``biases[k]``
    belong to ``predicates[k]``.  Use :meth:`function` or :attr:`vocab` for
    the per-predicate view.
    """

    space: SpaceConfig
    predicates: tuple
    weights: np.ndarray
    biases: np.ndarray
    freqs: np.ndarray
    links: Mapping[str, np.ndarray] = field(default_factory=dict)
    node_bias: np.ndarray | None = None

    def __post_init__(self):
        D = self.space.dims
        preds = tuple(self.predicates)
        if not preds:
            raise InputError("vocabulary must be non-empty")
        if len(set(preds)) != len(preds):
            raise InputError("duplicate predicate ids")
        W = _frozen(self.weights)
        b = _frozen(self.biases)
        fr = _frozen(self.freqs)
        if W.shape != (len(preds), D) or b.shape != (len(preds),) or fr.shape != (len(preds),):
            raise InputError("semantic function arrays do not match vocabulary size and dims")
        if np.any(fr <= 0):
            raise InputError("predicate frequencies must be positive")
        links = {}
        for label, m in dict(self.links).items():
            links[str(label)] = LinkWeights(str(label), m).matrix
            if links[str(label)].shape != (D, D):
                raise InputError(f"link {label!r} matrix must be {D}x{D}")
        nb = np.zeros(D) if self.node_bias is None else self.node_bias
        nb = _frozen(nb)
        if nb.shape != (D,):
            raise InputError("node_bias must have length dims")
        for name, arr in (("weights", W), ("biases", b), ("node_bias", nb)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite {name}")
        object.__setattr__(self, "predicates", preds)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "freqs", fr)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "node_bias", nb)
        object.__setattr__(self, "_index", {p: k for k, p in enumerate(preds)})

    @classmethod
    def from_functions(
        cls,
        space: SpaceConfig,
        vocab: Mapping[str, tuple[SemanticFunction, float]],
        links: Mapping[str, np.ndarray] | None = None,
        node_bias=None,
    ) -> "WorldModel":
        preds = list(vocab)
        for p in preds:
            if len(vocab[p][0].weights) != space.dims:
                raise InputError(f"semantic function of {p!r} does not have {space.dims} weights")
        return cls(
            space=space,
            predicates=tuple(preds),
            weights=np.array([vocab[p][0].weights for p in preds]).reshape(len(preds), space.dims),
            biases=np.array([vocab[p][0].bias for p in preds]),
            freqs=np.array([vocab[p][1] for p in preds], dtype=np.float64),
            links=links or {},
            node_bias=node_bias,
        )

    def replace(self, **changes) -> "WorldModel":
        fields = dict(
            space=self.space,
            predicates=self.predicates,
            weights=self.weights,
            biases=self.biases,
            freqs=self.freqs,
            links=self.links,
            node_bias=self.node_bias,
        )
        fields.update(changes)
        return WorldModel(**fields)

    def index(self, predicate: str) -> int:
        try:
            return self._index[predicate]
        except KeyError:
            raise InputError(f"unknown predicate {predicate!r}") from None

    def __contains__(self, predicate) -> bool:
        return predicate in self._index

    def function(self, predicate: str) -> SemanticFunction:
        k = self.index(predicate)
        return SemanticFunction(self.weights[k], self.biases[k])

    @property
    def vocab(self) -> dict[str, tuple[SemanticFunction, float]]:
        return {p: (self.function(p), float(self.freqs[k])) for k, p in enumerate(self.predicates)}

    def link(self, label: str) -> np.ndarray:
        try:
            return self.links[label]
        except KeyError:
            raise InputError(f"model has no link label {label!r}") from None

    def check_topology(self, topology: GraphTopology) -> None:
        for _, _, label in topology.edges:
            self.link(label)

    def check_conditions(self, topology: GraphTopology, conditions: Sequence[TruthCondition]):
        for c in conditions:
            topology.index(c.node)
            self.index(c.predicate)

    def __eq__(self, other):
        if not isinstance(other, WorldModel):
            return NotImplemented
        return (
            self.space == other.space
            and self.predicates == other.predicates
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
            and np.array_equal(self.freqs, other.freqs)
            and self.links.keys() == other.links.keys()
            and all(np.array_equal(self.links[k], other.links[k]) for k in self.links)
            and np.array_equal(self.node_bias, other.node_bias)
        )

    __hash__ = None


def assembly_energy(topology: GraphTopology, pixies: Mapping, model: WorldModel) -> float:
    vecs = {}
    for node in topology.nodes:
        if node not in pixies:
            raise InputError(f"no pixie assigned to node {node!r}")
        p = pixies[node]
        if not isinstance(p, PixieVector):
            p = PixieVector(np.asarray(p))
        p.validate(model.space)
        vecs[node] = p.bits.astype(np.float64)
    energy = 0.0
    for src, dst, label in topology.edges:
        energy += float(vecs[src] @ model.link(label) @ vecs[dst])
    for node in topology.nodes:
        energy += float(model.node_bias @ vecs[node])
    return energy


def assembly_weight(topology: GraphTopology, pixies: Mapping, model: WorldModel) -> float:
    """Unnormalised prior weight of a joint pixie assignment."""
    return math.exp(assembly_energy(topology, pixies, model))


def predicate_generation_distribution(model: WorldModel, x) -> dict[str, float]:
    """P(p | x) proportional to freq(p) * t_p(x) over the whole vocabulary."""
    if isinstance(x, PixieVector):
        x.validate(model.space)
    x = _as_input(x, model.space.dims)
    truth = expit(model.weights @ x + model.biases)
    mass = model.freqs * truth
    total = math.fsum(mass)
    if total == 0.0:
        raise DegenerateDistributionError("no predicate has non-zero truth probability")
    return {p: float(m / total) for p, m in zip(model.predicates, mass)}


# --- serialisation ---------------------------------------------------------


def model_to_dict(model: WorldModel) -> dict:
    return {
        "version": FORMAT_VERSION,
        "space": {"dims": model.space.dims, "cardinality": model.space.cardinality},
        "node_bias": model.node_bias.tolist(),
        "links": [{"label": k, "matrix": model.links[k].tolist()} for k in sorted(model.links)],
        "vocab": [
            {
                "id": p,
                "freq": float(model.freqs[k]),
                "bias": float(model.biases[k]),
                "weights": model.weights[k].tolist(),
            }
            for k, p in enumerate(model.predicates)
        ],
    }


def model_from_dict(doc: Mapping) -> WorldModel:
    try:
        if doc["version"] != FORMAT_VERSION:
            raise InputError(f"unsupported model format version {doc['version']!r}")
        space = SpaceConfig(int(doc["space"]["dims"]), int(doc["space"]["cardinality"]))
        vocab = doc["vocab"]
        return WorldModel(
            space=space,
            predicates=tuple(v["id"] for v in vocab),
            weights=np.array([v["weights"] for v in vocab], dtype=np.float64).reshape(
                len(vocab), space.dims
            ),
            biases=np.array([v["bias"] for v in vocab], dtype=np.float64),
            freqs=np.array([v["freq"] for v in vocab], dtype=np.float64),
            links={l["label"]: np.array(l["matrix"], dtype=np.float64) for l in doc["links"]},
            node_bias=np.array(doc["node_bias"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"malformed model document: {e}") from e


def save_model(model: WorldModel, path) -> None:
    # json emits the shortest repr of each float, which round-trips exactly
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=1, sort_keys=True)
        f.write("\n")


def load_model(path) -> WorldModel:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read model {path}: {e}") from e
    return model_from_dict(doc)
