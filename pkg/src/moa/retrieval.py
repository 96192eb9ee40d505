"""Scoring and ranking of method services against a query.

Similarity is lexical: equal tokens score 1, tokens sharing a synonym set
score 0.8, qualifiers compare by Jaccard index. Component weights are
0.5 (verb), 0.3 (target), 0.1 (qualifiers), 0.1 (keywords) and are
renormalized over the components a query actually populates.
"""

import math
from dataclasses import dataclass, field
from importlib import resources

from .descriptor import Intention, ProductSignature, normalize_intention, tokenize
from .errors import EmptyQuery, MetamodelMismatch

WEIGHTS = {"verb": 0.5, "target": 0.3, "qualifier": 0.1, "keyword": 0.1}
SYNONYM_SCORE = 0.8


class SynonymTable:
    def __init__(self, sets=()):
        self.sets = [frozenset(s) for s in sets if len(s) > 1]

    @classmethod
    def parse(cls, text: str) -> "SynonymTable":
        sets = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                sets.append({t.lower() for t in line.split()})
        return cls(sets)

    @classmethod
    def load(cls, path) -> "SynonymTable":
        with open(path, encoding="utf-8") as f:
            return cls.parse(f.read())

    @classmethod
    def default(cls) -> "SynonymTable":
        text = resources.files("moa.scenario").joinpath("data/synonyms.txt").read_text("utf-8")
        return cls.parse(text)

    def related(self, a: str, b: str) -> bool:
        return any(a in s and b in s for s in self.sets)

    def token_score(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return SYNONYM_SCORE if self.related(a, b) else 0.0


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    verb_score: float | None = None
    target_score: float | None = None
    qualifier_score: float | None = None
    keyword_score: float | None = None

    @classmethod
    def combine(cls, verb=None, target=None, qualifier=None, keyword=None) -> "SimilarityScore":
        parts = {"verb": verb, "target": target, "qualifier": qualifier, "keyword": keyword}
        populated = {k: v for k, v in parts.items() if v is not None}
        if not populated:
            value = 1.0
        elif all(v == 1.0 for v in populated.values()):
            value = 1.0
        else:
            total = math.fsum(WEIGHTS[k] * v for k, v in populated.items())
            value = min(1.0, max(0.0, total / math.fsum(WEIGHTS[k] for k in populated)))
        return cls(value, verb, target, qualifier, keyword)


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def intention_similarity(a: Intention, b: Intention, synonyms: SynonymTable | None = None) -> SimilarityScore:
    synonyms = synonyms or SynonymTable()
    return SimilarityScore.combine(
        verb=synonyms.token_score(a.verb, b.verb),
        target=synonyms.token_score(a.target, b.target),
        qualifier=jaccard(a.qualifiers, b.qualifiers),
    )


def shape_satisfies(doc_shape: ProductSignature, required: ProductSignature) -> bool:
    """Whether every lower bound in ``required`` is implied by ``doc_shape``."""
    if doc_shape.metamodel_name != required.metamodel_name:
        raise MetamodelMismatch(f"{doc_shape.metamodel_name!r} vs {required.metamodel_name!r}")
    have = doc_shape.bounds()
    return all(have.get(kind, 0) >= n for kind, n in required.bounds().items())


@dataclass(frozen=True)
class QuerySpec:
    intention_text: str | None = None
    paradigm_keywords: tuple = ()
    process_keywords: tuple = ()
    product_shape: ProductSignature | None = None
    classification_filters: tuple = field(default=())

    def is_empty(self) -> bool:
        return not (self.intention_text or self.paradigm_keywords or self.process_keywords
                    or self.product_shape is not None or self.classification_filters)

    def check(self):
        if self.is_empty():
            raise EmptyQuery("query needs an intention, keyword, product shape or filter")


def keyword_score(q: QuerySpec, descriptor) -> float | None:
    wanted = [(t, "paradigm") for k in q.paradigm_keywords for t in tokenize(k)]
    wanted += [(t, "process") for k in q.process_keywords for t in tokenize(k)]
    if not wanted:
        return None
    sem = descriptor.semantic
    vocab = {"paradigm": set(tokenize(sem.paradigm)),
             "process": {t for step in sem.process_description for t in tokenize(step)}}
    return sum(1 for tok, scope in wanted if tok in vocab[scope]) / len(wanted)


def score_candidate(q: QuerySpec, descriptor, synonyms: SynonymTable, query_intention=None) -> float:
    if q.product_shape is not None:
        try:
            if not shape_satisfies(q.product_shape, descriptor.semantic.product_in):
                return 0.0
        except MetamodelMismatch:
            return 0.0
    kw = keyword_score(q, descriptor)
    if query_intention is not None:
        s = intention_similarity(query_intention, descriptor.semantic.intention, synonyms)
        return SimilarityScore.combine(s.verb_score, s.target_score, s.qualifier_score, kw).value
    return SimilarityScore.combine(keyword=kw).value


def rank_key(record, score):
    return (-score, record.published_at, record.service_id)


def rank(q: QuerySpec, candidates, synonyms: SynonymTable | None = None):
    """Score candidates (already hard-filtered) and order them totally."""
    synonyms = synonyms or SynonymTable()
    intention = normalize_intention(q.intention_text) if q.intention_text else None
    scored = [(r, score_candidate(q, r.descriptor, synonyms, intention)) for r in candidates]
    scored.sort(key=lambda pair: rank_key(*pair))
    return scored
