"""Triple corpora, vocabularies and evaluation dataset loaders.

File formats (UTF-8, tab separated, ``#`` starts a comment line):

* triples: ``subject<TAB>verb<TAB>object`` with ``_`` for a missing argument
* similarity: ``word1<TAB>word2<TAB>score``
* RELPRON: ``term<TAB>hypernym<TAB>verb<TAB>argument<TAB>role<TAB>split``
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InputError

log = logging.getLogger(__name__)

MISSING = "_"
MAX_MALFORMED_FRACTION = 0.10
NOUN, VERB = "n", "v"


def tag(lemma: str, role: str) -> str:
    """Role-tag a lemma (``saw`` -> ``saw_n``); already tagged ids pass through."""
    lemma = lemma.lower()
    if lemma.endswith(("_n", "_v")):
        return lemma
    return f"{lemma}_{role}"


@dataclass(frozen=True)
class TripleRecord:
    subject: str | None
    verb: str
    object: str | None

    def __post_init__(self):
        if not self.verb:
            raise InputError("a triple needs a verb")
        if self.subject is None and self.object is None:
            raise InputError("a triple needs at least one argument")

    @property
    def transitive(self) -> bool:
        return self.subject is not None and self.object is not None

    def tagged(self) -> "TripleRecord":
        return TripleRecord(
            None if self.subject is None else tag(self.subject, NOUN),
            tag(self.verb, VERB),
            None if self.object is None else tag(self.object, NOUN),
        )

    def predicates(self) -> list[str]:
        return [p for p in (self.subject, self.verb, self.object) if p is not None]


@dataclass
class TripleCorpus:
    records: list[TripleRecord]
    malformed: list[tuple[int, str, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def _data_lines(lines: Iterable[str]):
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def _read(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return f.readlines()
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from e


def parse_triples(lines: Iterable[str]) -> TripleCorpus:
    records, malformed = [], []
    n = 0
    for lineno, line in _data_lines(lines):
        n += 1
        parts = line.split("\t")
        if len(parts) != 3:
            malformed.append((lineno, line, f"expected 3 fields, got {len(parts)}"))
            continue
        subj, verb, obj = (p.strip().lower() for p in parts)
        subj = None if subj in ("", MISSING) else subj
        obj = None if obj in ("", MISSING) else obj
        if verb in ("", MISSING) or (subj is None and obj is None):
            malformed.append((lineno, line, "need a verb and at least one argument"))
            continue
        records.append(TripleRecord(subj, verb, obj))
    if n and len(malformed) > MAX_MALFORMED_FRACTION * n:
        first = "; ".join(f"line {ln}: {why}" for ln, _, why in malformed[:5])
        raise InputError(f"{len(malformed)} of {n} lines malformed ({first})")
    for lineno, _, why in malformed:
        log.warning("skipping malformed line %d: %s", lineno, why)
    return TripleCorpus(records, malformed)


def load_triples(path) -> TripleCorpus:
    return parse_triples(_read(path))


def format_triples(records: Iterable[TripleRecord]) -> str:
    return "".join(
        f"{r.subject or MISSING}\t{r.verb}\t{r.object or MISSING}\n" for r in records
    )


def write_triples(records: Iterable[TripleRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_triples(records))


@dataclass
class Vocabulary:
    """Predicate counts in first-seen order, plus the triples that survived
    pruning (tagged)."""

    counts: dict[str, int]
    triples: list[TripleRecord]
    dropped: int = 0

    def __post_init__(self):
        self._index = {p: k for k, p in enumerate(self.counts)}

    def __len__(self):
        return len(self.counts)

    def __contains__(self, predicate):
        return predicate in self.counts

    def index(self, predicate: str) -> int:
        return self._index[predicate]

    @property
    def predicates(self) -> list[str]:
        return list(self.counts)


def build_vocabulary(
    triples: Iterable[TripleRecord], min_count: int = 1, keep_intransitives: bool = True
) -> Vocabulary:
    """Tag, count and prune.  Triples with a pruned predicate are dropped and
    counts recomputed until every remaining count is at least ``min_count``."""
    kept = [t.tagged() for t in triples]
    dropped = 0
    if not keep_intransitives:
        n = len(kept)
        kept = [t for t in kept if t.transitive]
        dropped += n - len(kept)
    while True:
        counts = Counter(p for t in kept for p in t.predicates())
        rare = {p for p, c in counts.items() if c < min_count}
        if not rare:
            break
        n = len(kept)
        kept = [t for t in kept if not rare.intersection(t.predicates())]
        dropped += n - len(kept)
    ordered: dict[str, int] = {}
    for t in kept:
        for p in t.predicates():
            ordered[p] = ordered.get(p, 0) + 1
    return Vocabulary(ordered, kept, dropped)


# --- evaluation datasets ---------------------------------------------------


@dataclass(frozen=True)
class SimilarityPair:
    word1: str
    word2: str
    score: float
    in_vocab: bool = True


@dataclass(frozen=True)
class RelpronEntry:
    term: str
    hypernym: str
    verb: str
    argument: str
    term_role: str
    split: str
    in_vocab: bool = True

    def predicates(self) -> tuple[str, ...]:
        return (self.term, self.hypernym, self.verb, self.argument)


def load_similarity_dataset(path, vocabulary=None, default_tag: str = NOUN) -> list[SimilarityPair]:
    """Untagged words get ``default_tag``; pairs with a word outside
    ``vocabulary`` (anything supporting ``in``) are kept but flagged."""
    pairs = []
    for lineno, line in _data_lines(_read(path)):
        parts = line.split("\t")
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected word1<TAB>word2<TAB>score")
        try:
            score = float(parts[2])
        except ValueError:
            raise InputError(f"{path}:{lineno}: bad score {parts[2]!r}") from None
        if not math.isfinite(score):
            raise InputError(f"{path}:{lineno}: non-finite score")
        w1, w2 = tag(parts[0].strip(), default_tag), tag(parts[1].strip(), default_tag)
        ok = vocabulary is None or (w1 in vocabulary and w2 in vocabulary)
        pairs.append(SimilarityPair(w1, w2, score, ok))
    return pairs


def load_relpron(path, vocabulary=None) -> list[RelpronEntry]:
    entries = []
    for lineno, line in _data_lines(_read(path)):
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 6:
            raise InputError(f"{path}:{lineno}: expected 6 tab-separated fields")
        term, hyper, verb, arg, role, split = parts
        role = role.upper()
        if role not in ("SBJ", "OBJ"):
            raise InputError(f"{path}:{lineno}: role must be SBJ or OBJ, got {role!r}")
        split = split.lower()
        if split not in ("dev", "test"):
            raise InputError(f"{path}:{lineno}: split must be dev or test, got {split!r}")
        preds = (tag(term, NOUN), tag(hyper, NOUN), tag(verb, VERB), tag(arg, NOUN))
        ok = vocabulary is None or all(p in vocabulary for p in preds)
        entries.append(RelpronEntry(*preds, role, split, ok))
    return entries


def write_similarity_dataset(pairs: Sequence[SimilarityPair], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(f"{p.word1}\t{p.word2}\t{p.score!r}\n")


def write_relpron(entries: Sequence[RelpronEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(f"{e.term}\t{e.hypernym}\t{e.verb}\t{e.argument}\t{e.term_role}\t{e.split}\n")
