"""Fragment comparison framework: four views, thirteen attributes, closed value domains.

Values are normalized to lowercase with single spaces, so ``not_specified``
and ``Not specified`` are the same value. A few printed spellings are folded
onto one canonical value through ``aliases``.
"""

import re
from dataclasses import dataclass, field

from .errors import DomainViolation, SchemaViolation

NOT_SPECIFIED = "not specified"


@dataclass(frozen=True)
class FrameworkAttribute:
    key: str
    view: str
    label: str
    domain: tuple
    multi: bool = True
    aliases: dict = field(default_factory=dict, hash=False, compare=False)

    def normalize(self, raw: str) -> str:
        value = re.sub(r"\s+", " ", raw.replace("_", " ")).strip().lower()
        value = self.aliases.get(value, value)
        if value not in self.domain:
            raise DomainViolation(f"{self.key}={raw!r} outside {{{', '.join(self.domain)}}}")
        return value


FRAMEWORK = (
    FrameworkAttribute(
        "interoperability", "Objective", "Interoperability",
        ("internal", "external in the same environment", "external in different environments",
         NOT_SPECIFIED)),
    FrameworkAttribute(
        "interactivity", "Objective", "Interactivity",
        ("manual", "assisted", "automated", NOT_SPECIFIED)),
    FrameworkAttribute(
        "covered_way", "Usage", "Covered way",
        ("thinking", "modeling", "working", "supporting", NOT_SPECIFIED)),
    FrameworkAttribute(
        "tools_implementation", "Usage", "Tools / implementation",
        ("storage", "manipulation", "operating", "retrieval", "construction", NOT_SPECIFIED),
        aliases={"product storage": "storage", "process operating": "operating"}),
    FrameworkAttribute(
        "level", "Subject", "Level",
        ("intentional", "structural", "operational", NOT_SPECIFIED)),
    FrameworkAttribute(
        "perspective", "Subject", "Perspective",
        ("process focused", "product focused", "producer focused", NOT_SPECIFIED),
        aliases={"process focussed": "process focused", "product focussed": "product focused",
                 "producer focussed": "producer focused"}),
    FrameworkAttribute(
        "recursion", "Subject", "Recursion", ("true", "false"), multi=False,
        aliases={"yes": "true", "no": "false"}),
    FrameworkAttribute(
        "abstraction_level", "Subject", "Abstraction level",
        ("meta-meta-model", "meta-model", "model", "schema", NOT_SPECIFIED)),
    FrameworkAttribute(
        "formalism", "Subject", "Formalism", ("conceptual", "technical", NOT_SPECIFIED)),
    FrameworkAttribute(
        "decomposition_principle", "Process", "Decomposition principle",
        ("tree decomposition", "by intentions", "by goal", "inheritance", "instantiation",
         NOT_SPECIFIED)),
    FrameworkAttribute(
        "retrieval_principle", "Process", "Retrieval/selection principle",
        ("request", "similarity measure", "request by goal", "semantic similarity",
         "request by paradigms", "request by intentions", "request by processes",
         "request by products", NOT_SPECIFIED)),
    FrameworkAttribute(
        "matching_with_situation", "Process", "Matching with situation",
        ("project characterisation", "requirements map", "goal analysis", "goal ontology",
         "actor ontology", "process ontology", "product ontology", NOT_SPECIFIED)),
    FrameworkAttribute(
        "construction_technique", "Process", "Construction technique",
        ("assembly", "extension", "reduction", "agile", "assembly without overlapping",
         NOT_SPECIFIED)),
)

ATTRIBUTES = {a.key: a for a in FRAMEWORK}
VIEWS = ("Objective", "Usage", "Subject", "Process")


def attribute(key: str) -> FrameworkAttribute:
    try:
        return ATTRIBUTES[key]
    except KeyError:
        raise SchemaViolation(f"unknown classification attribute {key!r}") from None


def normalize_values(key: str, raw) -> tuple:
    """Validate one attribute's value(s); returns them in domain order."""
    attr = attribute(key)
    items = raw.split(",") if isinstance(raw, str) else list(raw)
    values = {attr.normalize(str(v)) for v in items if str(v).strip()}
    if not values:
        raise DomainViolation(f"{key}: no value given")
    if not attr.multi and len(values) > 1:
        raise DomainViolation(f"{key}: takes a single value")
    return tuple(v for v in attr.domain if v in values)
