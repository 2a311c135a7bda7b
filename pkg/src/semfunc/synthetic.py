"""A small hand-built world for end-to-end checks.

Individuals belong to kinds (dog, telescope, ...), kinds to categories
(animal, person, tool).  Events are drawn from verb frames with category- or
kind-selective arguments; each mention names the individual either by its
kind or by its category's hypernym.  Every category also has members with no
kind word of their own, which are always named by the hypernym; without them
a hypernym would only ever stand in for a named kind and the two directions
of implication would come out equal.  Because the world is known, so are the
"right" answers: which nouns imply which, how similar two nouns are, and which
term a relative-clause property describes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .corpus import RelpronEntry, SimilarityPair, TripleRecord

CATEGORIES = {
    "animal": ("dog", "cat", "horse", "cow"),
    "person": ("astronomer", "carpenter", "chef", "farmer"),
    "tool": ("telescope", "saw", "knife", "plough"),
}

# (subject kind or category, verb, object kind or category, weight); None = absent
FRAMES = (
    # category-level behaviour
    ("animal", "eat", None, 3.0),
    ("animal", "sleep", None, 2.0),
    ("animal", "run", None, 2.0),
    ("person", "see", "animal", 2.0),
    ("person", "buy", "tool", 2.0),
    ("person", "use", "tool", 2.0),
    ("person", "talk", None, 2.0),
    # kind-specific behaviour, each with a verb of its own
    ("dog", "chase", "cat", 1.5),
    ("farmer", "milk", "cow", 1.5),
    ("horse", "pull", "plough", 1.5),
    ("astronomer", "study", "star", 1.5),
    ("carpenter", "build", "house", 1.5),
    ("chef", "cook", "meal", 1.5),
    ("astronomer", "focus", "telescope", 1.5),
    ("carpenter", "sharpen", "saw", 1.5),
    ("chef", "wield", "knife", 1.5),
)

# members of each category that have no word of their own
UNNAMED_PER_CATEGORY = 2

EXTRA_NOUNS = ("star", "house", "meal")

# (term, hypernym, verb, other argument, role of the term)
PROPERTIES = (
    ("dog", "animal", "chase", "cat", "SBJ"),
    ("cat", "animal", "chase", "dog", "OBJ"),
    ("cow", "animal", "milk", "farmer", "OBJ"),
    ("horse", "animal", "pull", "plough", "SBJ"),
    ("astronomer", "person", "study", "star", "SBJ"),
    ("carpenter", "person", "build", "house", "SBJ"),
    ("chef", "person", "cook", "meal", "SBJ"),
    ("farmer", "person", "milk", "cow", "SBJ"),
    ("telescope", "tool", "focus", "astronomer", "OBJ"),
    ("saw", "tool", "sharpen", "carpenter", "OBJ"),
    ("knife", "tool", "wield", "chef", "OBJ"),
    ("plough", "tool", "pull", "horse", "OBJ"),
)


@dataclass
class SyntheticWorld:
    hypernym_rate: float = 0.3
    unnamed_per_category: int = UNNAMED_PER_CATEGORY
    categories: dict = field(default_factory=lambda: dict(CATEGORIES))
    frames: tuple = FRAMES
    properties: tuple = PROPERTIES

    def category_of(self, kind: str) -> str | None:
        for cat in self.categories:
            if kind in self.members(cat):
                return cat
        return None

    def members(self, category: str) -> list[str]:
        """Named kinds followed by the category's unnamed ones."""
        unnamed = [f"{category}#{k}" for k in range(1, self.unnamed_per_category + 1)]
        return list(self.categories[category]) + unnamed

    @staticmethod
    def is_named(kind: str) -> bool:
        return "#" not in kind

    @property
    def kinds(self) -> list[str]:
        return [k for kinds in self.categories.values() for k in kinds]

    def _expand(self, slot):
        if slot is None:
            return [None]
        return self.members(slot) if slot in self.categories else [slot]

    def event_table(self):
        """All concrete (subject kind, verb, object kind) events with their
        probabilities; category slots are split evenly among kinds."""
        table = {}
        total = sum(f[3] for f in self.frames)
        for subj, verb, obj, w in self.frames:
            ss, oo = self._expand(subj), self._expand(obj)
            for s in ss:
                for o in oo:
                    key = (s, verb, o)
                    table[key] = table.get(key, 0.0) + w / total / (len(ss) * len(oo))
        return table

    def _name(self, kind, rng):
        cat = self.category_of(kind)
        if cat is not None and (not self.is_named(kind) or rng.random() < self.hypernym_rate):
            return cat
        return kind

    def generate(self, n_triples: int, seed: int = 0) -> list[TripleRecord]:
        rng = np.random.default_rng(seed)
        table = self.event_table()
        events = list(table)
        probs = np.array([table[e] for e in events])
        picks = rng.choice(len(events), size=n_triples, p=probs / probs.sum())
        out = []
        for k in picks:
            s, v, o = events[k]
            out.append(TripleRecord(
                None if s is None else self._name(s, rng),
                v,
                None if o is None else self._name(o, rng),
            ))
        return out

    def context_profile(self, kind: str) -> dict:
        """Distribution over (role, verb) contexts in which a kind occurs."""
        prof: dict = {}
        for (s, v, o), p in self.event_table().items():
            if s == kind:
                prof[("SBJ", v)] = prof.get(("SBJ", v), 0.0) + p
            if o == kind:
                prof[("OBJ", v)] = prof.get(("OBJ", v), 0.0) + p
        return prof

    def true_similarity(self, a: str, b: str) -> float:
        """Cosine similarity of the two kinds' context profiles."""
        pa, pb = self.context_profile(a), self.context_profile(b)
        dot = sum(pa[k] * pb.get(k, 0.0) for k in pa)
        na = math.sqrt(sum(v * v for v in pa.values()))
        nb = math.sqrt(sum(v * v for v in pb.values()))
        return dot / (na * nb) if na and nb else 0.0

    def similarity_pairs(self) -> list[SimilarityPair]:
        return [
            SimilarityPair(f"{a}_n", f"{b}_n", self.true_similarity(a, b))
            for a, b in combinations(self.kinds, 2)
        ]

    def relpron_entries(self, split: str = "test") -> list[RelpronEntry]:
        return [
            RelpronEntry(f"{t}_n", f"{h}_n", f"{v}_v", f"{a}_n", role, split)
            for t, h, v, a, role in self.properties
        ]
