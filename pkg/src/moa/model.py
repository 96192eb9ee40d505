"""Class-diagram products: metamodel, XMI-subset documents and the object graph.

The transformation pipeline runs parse -> instantiate -> (transform) ->
generate -> serialize; the first, second, fourth and fifth stages live here.
"""

import enum
import re
from dataclasses import dataclass, field

from . import xmlio
from .errors import DanglingReference, DuplicateName, SchemaViolation, ValidationFailed

NAMESPACE = "urn:moa:ximodel:1"
METAMODEL = "classdiagram"

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
ATTRIBUTE_TYPES = ("string", "integer", "boolean")


class Multiplicity(str, enum.Enum):
    ONE = "1"
    OPT = "0..1"
    MANY = "0..*"
    SOME = "1..*"

    @property
    def lower(self) -> int:
        return 1 if self in (Multiplicity.ONE, Multiplicity.SOME) else 0

    @property
    def upper(self):
        """Upper bound, ``None`` when unbounded."""
        return 1 if self in (Multiplicity.ONE, Multiplicity.OPT) else None

    def admits(self, n: int) -> bool:
        return n >= self.lower and (self.upper is None or n <= self.upper)


MULTIPLICITY_TOKENS = tuple(m.value for m in Multiplicity)


@dataclass(frozen=True)
class Metamodel:
    """The fixed class-diagram metamodel; the meta-meta level is this code."""

    name: str = METAMODEL
    element_kinds: frozenset = frozenset({"Class", "Attribute", "Association", "AssociationEnd"})


CLASS_DIAGRAM = Metamodel()


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str = "string"


@dataclass(frozen=True)
class ClassDef:
    name: str
    attributes: tuple = ()


@dataclass(frozen=True)
class AssociationEnd:
    class_ref: str
    multiplicity: Multiplicity = Multiplicity.MANY
    role: str | None = None


@dataclass(frozen=True)
class AssociationDef:
    name: str
    end_a: AssociationEnd
    end_b: AssociationEnd
    attributes: tuple = ()


@dataclass(frozen=True)
class ModelDocument:
    model_name: str
    classes: tuple = ()
    associations: tuple = ()

    def find_class(self, name):
        return next((c for c in self.classes if c.name == name), None)

    def find_association(self, name):
        return next((a for a in self.associations if a.name == name), None)


def model(name, classes=(), associations=()) -> ModelDocument:
    """Build a document from plain lists (tests and fixtures use this a lot)."""
    return ModelDocument(name, tuple(classes), tuple(associations))


# validation

@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str = ""

    def __str__(self):
        return f"{self.path}: {self.rule}" + (f" ({self.message})" if self.message else "")


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path, rule, message=""):
        self.violations.append(Violation(path, rule, message))

    def rules(self):
        return [v.rule for v in self.violations]


def _check_attributes(report, owner_path, attributes):
    seen = set()
    for attr in attributes:
        path = f"{owner_path}/Attribute[{attr.name}]"
        if not isinstance(attr.name, str) or not IDENTIFIER.match(attr.name):
            report.add(path, "InvalidIdentifier", repr(attr.name))
        if attr.name in seen:
            report.add(path, "DuplicateName", "attribute name repeated")
        seen.add(attr.name)
        if attr.type not in ATTRIBUTE_TYPES:
            report.add(path, "InvalidType", repr(attr.type))


def validate_model(doc: ModelDocument) -> ValidationReport:
    """Check every structural rule; violations are returned, never raised."""
    report = ValidationReport()
    root = f"Model[{doc.model_name}]"
    if not isinstance(doc.model_name, str) or not IDENTIFIER.match(doc.model_name):
        report.add(root, "InvalidIdentifier", repr(doc.model_name))

    class_names = set()
    for cls in doc.classes:
        path = f"{root}/Class[{cls.name}]"
        if not isinstance(cls.name, str) or not IDENTIFIER.match(cls.name):
            report.add(path, "InvalidIdentifier", repr(cls.name))
        if cls.name in class_names:
            report.add(path, "DuplicateName", "class name repeated")
        class_names.add(cls.name)
        _check_attributes(report, path, cls.attributes)

    assoc_names = set()
    for assoc in doc.associations:
        path = f"{root}/Association[{assoc.name}]"
        if not isinstance(assoc.name, str) or not IDENTIFIER.match(assoc.name):
            report.add(path, "InvalidIdentifier", repr(assoc.name))
        if assoc.name in assoc_names:
            report.add(path, "DuplicateName", "association name repeated")
        assoc_names.add(assoc.name)
        for label, end in (("a", assoc.end_a), ("b", assoc.end_b)):
            end_path = f"{path}/End[{label}]"
            if not end.class_ref:
                report.add(end_path, "EmptyReference")
            elif end.class_ref not in class_names:
                report.add(end_path, "DanglingReference", f"unknown class {end.class_ref!r}")
            if end.multiplicity not in MULTIPLICITY_TOKENS:
                report.add(end_path, "InvalidMultiplicity", repr(end.multiplicity))
            if end.role is not None and not IDENTIFIER.match(str(end.role)):
                report.add(end_path, "InvalidIdentifier", repr(end.role))
        _check_attributes(report, path, assoc.attributes)
    return report


# XML

def _identifier(value, path):
    if not IDENTIFIER.match(value):
        raise SchemaViolation(f"{path}: {value!r} is not an identifier")
    return value


def _parse_attribute(elem, path):
    xmlio.no_text(elem, path)
    if len(elem):
        raise SchemaViolation(f"{path}: <moa:Attribute> has no children")
    attrs = xmlio.check_attrs(elem, path, required=("name", "type"))
    if attrs["type"] not in ATTRIBUTE_TYPES:
        raise SchemaViolation(f"{path}: attribute type {attrs['type']!r} not in {ATTRIBUTE_TYPES}")
    return Attribute(_identifier(attrs["name"], path), attrs["type"])


def _parse_end(elem, path):
    xmlio.no_text(elem, path)
    if len(elem):
        raise SchemaViolation(f"{path}: <moa:End> has no children")
    attrs = xmlio.check_attrs(elem, path, required=("class", "multiplicity"), optional=("role",))
    token = attrs["multiplicity"]
    if token not in MULTIPLICITY_TOKENS:
        raise SchemaViolation(f"{path}: multiplicity {token!r} not in {MULTIPLICITY_TOKENS}")
    role = attrs.get("role")
    return AssociationEnd(_identifier(attrs["class"], path), Multiplicity(token),
                          _identifier(role, path) if role is not None else None)


def model_from_element(root) -> ModelDocument:
    """Build a document from an already parsed ``<moa:Model>`` element."""
    xmlio.expect_tag(root, "moa:Model")
    attrs = xmlio.check_attrs(root, "Model", required=("name",), namespace=NAMESPACE)
    xmlio.no_text(root, "Model")
    name = _identifier(attrs["name"], "Model")
    classes, associations = [], []
    for child in root:
        if child.tag == "moa:Class":
            path = f"Model/Class[{child.get('name')}]"
            cattrs = xmlio.check_attrs(child, path, required=("name",))
            xmlio.no_text(child, path)
            attributes = []
            for sub in child:
                if sub.tag != "moa:Attribute":
                    raise SchemaViolation(f"{path}: unexpected <{sub.tag}>")
                attributes.append(_parse_attribute(sub, f"{path}/Attribute"))
            classes.append(ClassDef(_identifier(cattrs["name"], path), tuple(attributes)))
        elif child.tag == "moa:Association":
            path = f"Model/Association[{child.get('name')}]"
            aattrs = xmlio.check_attrs(child, path, required=("name",))
            xmlio.no_text(child, path)
            ends, attributes = [], []
            for sub in child:
                if sub.tag == "moa:End":
                    ends.append(_parse_end(sub, f"{path}/End"))
                elif sub.tag == "moa:Attribute":
                    attributes.append(_parse_attribute(sub, f"{path}/Attribute"))
                else:
                    raise SchemaViolation(f"{path}: unexpected <{sub.tag}>")
            if len(ends) != 2:
                raise SchemaViolation(f"{path}: exactly two <moa:End> required, found {len(ends)}")
            associations.append(AssociationDef(_identifier(aattrs["name"], path), ends[0], ends[1],
                                               tuple(attributes)))
        else:
            raise SchemaViolation(f"Model: unexpected <{child.tag}>")

    doc = ModelDocument(name, tuple(classes), tuple(associations))
    report = validate_model(doc)
    for v in report.violations:
        if v.rule == "DuplicateName":
            raise DuplicateName(str(v))
    for v in report.violations:
        if v.rule == "DanglingReference":
            raise DanglingReference(str(v))
    if not report.ok:
        raise SchemaViolation(str(report.violations[0]))
    return doc


def parse_model(text) -> ModelDocument:
    return model_from_element(xmlio.parse(text))


def _attribute_element(attr):
    return xmlio.element("moa:Attribute", {"name": attr.name, "type": attr.type})


def model_to_element(doc: ModelDocument):
    root = xmlio.element("moa:Model", {"name": doc.model_name})
    for cls in doc.classes:
        root.append(xmlio.element("moa:Class", {"name": cls.name},
                                  children=[_attribute_element(a) for a in cls.attributes]))
    for assoc in doc.associations:
        ends = [xmlio.element("moa:End", {"class": e.class_ref,
                                          "multiplicity": Multiplicity(e.multiplicity).value,
                                          "role": e.role})
                for e in (assoc.end_a, assoc.end_b)]
        root.append(xmlio.element("moa:Association", {"name": assoc.name},
                                  children=ends + [_attribute_element(a) for a in assoc.attributes]))
    return root


def serialize_model(doc: ModelDocument) -> str:
    """Canonical text: classes then associations, insertion order, LF, trailing newline."""
    return xmlio.write(model_to_element(doc))


# object graph

class ClassNode:
    def __init__(self, name, attributes=()):
        self.name = name
        self.attributes = list(attributes)

    def __repr__(self):
        return f"ClassNode({self.name!r})"


class EndRef:
    def __init__(self, node: ClassNode, multiplicity, role=None):
        self.node = node
        self.multiplicity = Multiplicity(multiplicity)
        self.role = role


class AssociationNode:
    def __init__(self, name, end_a: EndRef, end_b: EndRef, attributes=()):
        self.name = name
        self.end_a = end_a
        self.end_b = end_b
        self.attributes = list(attributes)

    def __repr__(self):
        return f"AssociationNode({self.name!r})"


class ObjectGraph:
    """Resolved, mutable form of a document; ends point at class nodes."""

    def __init__(self, model_name, classes=None, associations=None):
        self.model_name = model_name
        self.classes = classes or []
        self.associations = associations or []

    @property
    def node_count(self) -> int:
        return len(self.classes) + len(self.associations)

    def class_node(self, name):
        return next((c for c in self.classes if c.name == name), None)

    def association_node(self, name):
        return next((a for a in self.associations if a.name == name), None)


def instantiate(doc: ModelDocument) -> ObjectGraph:
    report = validate_model(doc)
    if not report.ok:
        raise ValidationFailed(report)
    nodes = {c.name: ClassNode(c.name, c.attributes) for c in doc.classes}
    associations = [
        AssociationNode(
            a.name,
            EndRef(nodes[a.end_a.class_ref], a.end_a.multiplicity, a.end_a.role),
            EndRef(nodes[a.end_b.class_ref], a.end_b.multiplicity, a.end_b.role),
            a.attributes,
        )
        for a in doc.associations
    ]
    return ObjectGraph(doc.model_name, [nodes[c.name] for c in doc.classes], associations)


def generate(graph: ObjectGraph) -> ModelDocument:
    def end(ref):
        return AssociationEnd(ref.node.name, ref.multiplicity, ref.role)

    return ModelDocument(
        graph.model_name,
        tuple(ClassDef(c.name, tuple(c.attributes)) for c in graph.classes),
        tuple(AssociationDef(a.name, end(a.end_a), end(a.end_b), tuple(a.attributes))
              for a in graph.associations),
    )
