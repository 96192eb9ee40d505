"""Independent reference computations the tests compare the package against.

Nothing here calls the code under test except to read documents; the
population oracle works directly on multiplicity semantics.
"""

import itertools
from dataclasses import dataclass

from moa.model import ModelDocument

MAX_INSTANCES = 3
ENUMERATION_BUDGET = 2_000_000


def admits(mult, n: int) -> bool:
    token = getattr(mult, "value", mult)
    lo, hi = {"1": (1, 1), "0..1": (0, 1), "0..*": (0, None), "1..*": (1, None)}[token]
    return n >= lo and (hi is None or n <= hi)


def valid_links(links, a_count, b_count, mult_at_a, mult_at_b) -> bool:
    """Multiplicity at an end bounds how many of that end's objects each opposite object sees."""
    per_a = [0] * a_count
    per_b = [0] * b_count
    for i, j in links:
        per_a[i] += 1
        per_b[j] += 1
    return all(admits(mult_at_b, k) for k in per_a) and all(admits(mult_at_a, k) for k in per_b)


def link_populations(a_count, b_count, mult_at_a, mult_at_b):
    pairs = list(itertools.product(range(a_count), range(b_count)))
    for mask in range(1 << len(pairs)):
        links = frozenset(p for k, p in enumerate(pairs) if mask >> k & 1)
        if valid_links(links, a_count, b_count, mult_at_a, mult_at_b):
            yield links


@dataclass
class BijectionResult:
    schemas_checked: int = 0
    populations_checked: int = 0
    counterexamples: list = None

    def __post_init__(self):
        self.counterexamples = self.counterexamples or []


def _assoc(doc, name):
    return next((a for a in doc.associations if a.name == name), None)


def _link_assoc(out: ModelDocument, r_name: str, cls: str):
    """The association in ``out`` joining class ``cls`` and the new class ``r_name``."""
    for a in out.associations:
        ends = {a.end_a.class_ref, a.end_b.class_ref}
        if ends == {cls, r_name} and a.name != r_name:
            return a
    return None


def _ends_for(assoc, cls):
    """(multiplicity at cls end, multiplicity at R end)."""
    if assoc.end_a.class_ref == cls:
        return assoc.end_a.multiplicity, assoc.end_b.multiplicity
    return assoc.end_b.multiplicity, assoc.end_a.multiplicity


def _profile_populations(n_a, n_b, at_a_for_r, r_end_ra, at_b_for_r, r_end_rb, budget):
    """Valid sets of R-objects for the objectified schema.

    An R-object is identified by its profile: the set of A objects and the
    set of B objects it is linked to. Profiles allowed per object follow the
    multiplicities at the A and B ends of the two linking associations
    (read from the transformed document, not assumed).
    """
    def subsets(n, mult):
        return [frozenset(c) for k in range(n + 1) for c in itertools.combinations(range(n), k)
                if admits(mult, k)]

    profiles = [(sa, sb) for sa in subsets(n_a, at_a_for_r) for sb in subsets(n_b, at_b_for_r)]
    if len(profiles) > 20:
        raise OverflowError(f"{len(profiles)} candidate R profiles")
    out = []
    for mask in range(1 << len(profiles)):
        budget[0] -= 1
        if budget[0] < 0:
            raise OverflowError("enumeration budget exhausted")
        chosen = [p for k, p in enumerate(profiles) if mask >> k & 1]
        per_a, per_b = [0] * n_a, [0] * n_b
        for sa, sb in chosen:
            for i in sa:
                per_a[i] += 1
            for j in sb:
                per_b[j] += 1
        if all(admits(r_end_ra, k) for k in per_a) and all(admits(r_end_rb, k) for k in per_b):
            out.append(frozenset(chosen))
    return out


def check_objectify_bijection(original: ModelDocument, transformed: ModelDocument, r_name: str,
                              result: BijectionResult, budget=None):
    """Compare valid populations of R in ``original`` with valid R-object sets in ``transformed``.

    For every instance-count assignment (up to MAX_INSTANCES per class of the
    association's ends) the map link (a, b) -> R-object with profile
    ({a}, {b}) must be a bijection onto the valid R-object sets. Associations
    other than R must come through unchanged; their populations are then
    identical independent factors on both sides.
    """
    budget = budget if budget is not None else [ENUMERATION_BUDGET]
    result.schemas_checked += 1
    ce = result.counterexamples
    r = _assoc(original, r_name)
    a_cls, b_cls = r.end_a.class_ref, r.end_b.class_ref

    others = [a for a in original.associations if a.name != r_name]
    for a in others:
        if _assoc(transformed, a.name) != a:
            ce.append((original.model_name, r_name, f"association {a.name} changed"))
            return
    for c in original.classes:
        if next((x for x in transformed.classes if x.name == c.name), None) != c:
            ce.append((original.model_name, r_name, f"class {c.name} changed"))
            return
    r_class = next((x for x in transformed.classes if x.name == r_name), None)
    if r_class is None or r_class.attributes != r.attributes:
        ce.append((original.model_name, r_name, "no class carrying R's attributes"))
        return
    ra, rb = _link_assoc(transformed, r_name, a_cls), _link_assoc(transformed, r_name, b_cls)
    if ra is None or rb is None or ra == rb or len(transformed.associations) != len(others) + 2:
        ce.append((original.model_name, r_name, "linking associations missing"))
        return
    at_a, r_end_ra = _ends_for(ra, a_cls)
    at_b, r_end_rb = _ends_for(rb, b_cls)

    for n_a, n_b in itertools.product(range(MAX_INSTANCES + 1), repeat=2):
        before = {frozenset((frozenset({i}), frozenset({j})) for i, j in links)
                  for links in link_populations(n_a, n_b, r.end_a.multiplicity, r.end_b.multiplicity)}
        try:
            after = set(_profile_populations(n_a, n_b, at_a, r_end_ra, at_b, r_end_rb, budget))
        except OverflowError as exc:
            ce.append((original.model_name, r_name, f"n=({n_a},{n_b}): {exc}"))
            return
        result.populations_checked += len(before)
        if before != after:
            missing, extra = len(before - after), len(after - before)
            ce.append((original.model_name, r_name,
                       f"n=({n_a},{n_b}): {missing} original populations unmatched, {extra} extra"))
            return


# retrieval reference: the weighted formula written out longhand

def formula_score(verb, target, qualifier, keyword=None) -> float:
    parts = [(0.5, verb), (0.3, target), (0.1, qualifier), (0.1, keyword)]
    used = [(w, s) for w, s in parts if s is not None]
    if not used:
        return 1.0
    return sum(w * s for w, s in used) / sum(w for w, _ in used)
