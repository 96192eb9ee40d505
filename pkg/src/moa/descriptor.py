"""Method-service descriptors: semantic part, operational part, classification."""

import re
from dataclasses import dataclass, field

from . import framework, xmlio
from .errors import DomainViolation, EmptyIntention, MissingTarget, SchemaViolation, SignatureMismatch
from .model import IDENTIFIER, METAMODEL

NAMESPACE = "urn:moa:descriptor:1"
STOP_WORDS = frozenset({"a", "an", "the", "of", "into", "from", "to"})
TOKEN = re.compile(r"[a-z0-9_]+\Z")
VERSION = re.compile(r"[A-Za-z0-9._-]+\Z")
CONSTRAINT_KINDS = ("HAS_CLASS", "HAS_ASSOCIATION", "NONE")


def tokenize(text: str) -> list:
    """Lowercase, drop punctuation, split on whitespace."""
    cleaned = re.sub(r"[^a-z0-9_\s]", "", text.lower())
    return cleaned.split()


@dataclass(frozen=True)
class Intention:
    verb: str
    target: str
    qualifiers: tuple = ()
    raw_text: str = ""

    @property
    def key(self):
        return self.verb, self.target, self.qualifiers

    def reconstruct(self) -> str:
        return " ".join((self.verb, self.target) + tuple(self.qualifiers))


def normalize_intention(raw: str) -> Intention:
    tokens = tokenize(raw or "")
    if not tokens:
        raise EmptyIntention(f"no content in {raw!r}")
    content = [t for t in tokens if t not in STOP_WORDS]
    if len(content) < 2:
        raise MissingTarget(f"{raw!r} needs a verb and a target")
    return Intention(content[0], content[1], tuple(content[2:]), raw)


@dataclass(frozen=True)
class Constraint:
    kind: str
    min: int = 0

    def __str__(self):
        return self.kind if self.kind == "NONE" else f"{self.kind}(n>={self.min})"


@dataclass(frozen=True)
class ProductSignature:
    metamodel_name: str = METAMODEL
    constraints: tuple = ()

    def bounds(self) -> dict:
        """Lower bound per constraint kind; NONE contributes nothing."""
        out = {}
        for c in self.constraints:
            if c.kind != "NONE":
                out[c.kind] = max(out.get(c.kind, 0), c.min)
        return out


def signature_of(doc, metamodel: str = METAMODEL) -> ProductSignature:
    """Exact-count signature of a concrete document."""
    return ProductSignature(metamodel, (Constraint("HAS_CLASS", len(doc.classes)),
                                        Constraint("HAS_ASSOCIATION", len(doc.associations))))


@dataclass(frozen=True)
class OperationDef:
    name: str
    params: tuple = ()
    input_metamodel: str | None = None
    output_metamodel: str | None = None


@dataclass(frozen=True)
class OperationalDescriptor:
    operations: tuple
    endpoint: str

    def operation(self, name):
        return next((op for op in self.operations if op.name == name), None)


@dataclass(frozen=True)
class SemanticDescriptor:
    intention: Intention
    paradigm: str
    process_description: tuple
    product_in: ProductSignature
    product_out: ProductSignature


@dataclass(frozen=True)
class ClassificationMetadata:
    """One value tuple per framework attribute, each in domain order."""

    values: tuple = field(default=())

    @classmethod
    def from_mapping(cls, mapping) -> "ClassificationMetadata":
        missing = [a.key for a in framework.FRAMEWORK if a.key not in mapping]
        if missing:
            raise SchemaViolation(f"classification lacks {', '.join(missing)}")
        for key in mapping:
            framework.attribute(key)
        return cls(tuple((a.key, framework.normalize_values(a.key, mapping[a.key]))
                         for a in framework.FRAMEWORK))

    def as_dict(self) -> dict:
        return dict(self.values)

    def __getitem__(self, key):
        return self.as_dict()[key]

    def matches(self, key: str, raw_value: str) -> bool:
        value = framework.attribute(key).normalize(raw_value)
        return value in self[key]


@dataclass(frozen=True)
class MethodServiceDescriptor:
    service_name: str
    version: str
    semantic: SemanticDescriptor
    operational: OperationalDescriptor
    classification: ClassificationMetadata

    @property
    def ref(self) -> str:
        return f"{self.service_name}@{self.version}"


def check_descriptor(d: MethodServiceDescriptor):
    """Raise the first invariant the descriptor breaks."""
    if not IDENTIFIER.match(d.service_name or ""):
        raise SchemaViolation(f"service name {d.service_name!r} is not an identifier")
    if not VERSION.match(d.version or ""):
        raise SchemaViolation(f"version {d.version!r} is not a version token")
    i = d.semantic.intention
    if not (i.verb and i.target) or not all(TOKEN.match(t) for t in (i.verb, i.target, *i.qualifiers)):
        raise SchemaViolation(f"intention {i!r} is not normalized")
    for sig in (d.semantic.product_in, d.semantic.product_out):
        if not IDENTIFIER.match(sig.metamodel_name or ""):
            raise SchemaViolation(f"metamodel {sig.metamodel_name!r} is not an identifier")
        for c in sig.constraints:
            if c.kind not in CONSTRAINT_KINDS or c.min < 0:
                raise SchemaViolation(f"bad product constraint {c}")
    ops = d.operational.operations
    if not ops:
        raise SchemaViolation("operational descriptor declares no operation")
    names = [op.name for op in ops]
    if len(set(names)) != len(names):
        raise SchemaViolation("operation names are not unique")
    for op in ops:
        if not TOKEN.match(op.name):
            raise SchemaViolation(f"operation name {op.name!r}")
        if len(set(op.params)) != len(op.params) or not all(TOKEN.match(p) for p in op.params):
            raise SchemaViolation(f"operation {op.name}: bad parameter list")
        if op.input_metamodel not in (None, d.semantic.product_in.metamodel_name):
            raise SignatureMismatch(f"operation {op.name} input metamodel {op.input_metamodel!r} "
                                    f"!= product-in {d.semantic.product_in.metamodel_name!r}")
        if op.output_metamodel not in (None, d.semantic.product_out.metamodel_name):
            raise SignatureMismatch(f"operation {op.name} output metamodel {op.output_metamodel!r} "
                                    f"!= product-out {d.semantic.product_out.metamodel_name!r}")
    if not d.operational.endpoint:
        raise SchemaViolation("empty endpoint")
    expected = [a.key for a in framework.FRAMEWORK]
    if [k for k, _ in d.classification.values] != expected:
        raise SchemaViolation("classification does not cover the framework attributes")
    for key, values in d.classification.values:
        if framework.normalize_values(key, values) != tuple(values):
            raise DomainViolation(f"{key}: values not canonical")


# XML

def signature_from_element(elem, path):
    attrs = xmlio.check_attrs(elem, path, required=("metamodel",))
    xmlio.no_text(elem, path)
    constraints = []
    for req in elem:
        if req.tag != "moa:Requires":
            raise SchemaViolation(f"{path}: unexpected <{req.tag}>")
        r = xmlio.check_attrs(req, f"{path}/Requires", required=("kind",), optional=("min",))
        kind = r["kind"]
        if kind not in CONSTRAINT_KINDS:
            raise SchemaViolation(f"{path}: constraint kind {kind!r}")
        if kind == "NONE":
            if "min" in r:
                raise SchemaViolation(f"{path}: NONE takes no min")
            constraints.append(Constraint("NONE"))
            continue
        if "min" not in r or not r["min"].isdigit():
            raise SchemaViolation(f"{path}: {kind} needs a non-negative integer min")
        constraints.append(Constraint(kind, int(r["min"])))
    return ProductSignature(attrs["metamodel"], tuple(constraints))


def _message(elem, path):
    attrs = xmlio.check_attrs(elem, path, required=("message",), optional=("metamodel",))
    if attrs["message"] != "PRODUCT":
        raise SchemaViolation(f"{path}: message kind must be PRODUCT, not {attrs['message']!r}")
    return attrs.get("metamodel")


def _operation_from(elem, path):
    attrs = xmlio.check_attrs(elem, path, required=("name",))
    xmlio.no_text(elem, path)
    kids = list(elem)
    if [k.tag for k in kids] != ["moa:Input", "moa:Output"]:
        raise SchemaViolation(f"{path}: expected <moa:Input> then <moa:Output>")
    inp, out = kids
    in_mm = _message(inp, f"{path}/Input")
    xmlio.no_text(inp, f"{path}/Input")
    params = []
    for p in inp:
        if p.tag != "moa:Param":
            raise SchemaViolation(f"{path}/Input: unexpected <{p.tag}>")
        params.append(xmlio.check_attrs(p, f"{path}/Input/Param", required=("name",))["name"])
    out_mm = _message(out, f"{path}/Output")
    if len(out) or (out.text and out.text.strip()):
        raise SchemaViolation(f"{path}/Output: no content allowed")
    return OperationDef(attrs["name"], tuple(params), in_mm, out_mm)


def descriptor_from_element(root) -> MethodServiceDescriptor:
    xmlio.expect_tag(root, "moa:MethodService")
    attrs = xmlio.check_attrs(root, "MethodService", required=("name", "version"), namespace=NAMESPACE)
    xmlio.no_text(root, "MethodService")
    kids = list(root)
    if [k.tag for k in kids] != ["moa:Semantic", "moa:Operational", "moa:Classification"]:
        raise SchemaViolation("MethodService: expected Semantic, Operational, Classification")
    sem, op, cls = kids

    xmlio.check_attrs(sem, "Semantic")
    xmlio.no_text(sem, "Semantic")
    order = ["moa:Intention", "moa:Paradigm", "moa:Process", "moa:ProductIn", "moa:ProductOut"]
    if [k.tag for k in sem] != order:
        raise SchemaViolation("Semantic: expected Intention, Paradigm, Process, ProductIn, ProductOut")
    intention_e, paradigm_e, process_e, pin_e, pout_e = list(sem)
    for e in (intention_e, paradigm_e):
        xmlio.check_attrs(e, e.tag)
    intention = normalize_intention(xmlio.leaf_text(intention_e, "Semantic/Intention"))
    paradigm = xmlio.leaf_text(paradigm_e, "Semantic/Paradigm")
    xmlio.check_attrs(process_e, "Semantic/Process")
    xmlio.no_text(process_e, "Semantic/Process")
    steps = []
    for s in process_e:
        if s.tag != "moa:Step":
            raise SchemaViolation(f"Semantic/Process: unexpected <{s.tag}>")
        xmlio.check_attrs(s, "Semantic/Process/Step")
        steps.append(xmlio.leaf_text(s, "Semantic/Process/Step"))
    semantic = SemanticDescriptor(intention, paradigm, tuple(steps),
                                  signature_from_element(pin_e, "Semantic/ProductIn"),
                                  signature_from_element(pout_e, "Semantic/ProductOut"))

    oattrs = xmlio.check_attrs(op, "Operational", required=("endpoint",))
    xmlio.no_text(op, "Operational")
    operations = []
    for o in op:
        if o.tag != "moa:Operation":
            raise SchemaViolation(f"Operational: unexpected <{o.tag}>")
        operations.append(_operation_from(o, f"Operational/Operation[{o.get('name')}]"))
    operational = OperationalDescriptor(tuple(operations), oattrs["endpoint"])

    if len(cls) or (cls.text and cls.text.strip()):
        raise SchemaViolation("Classification: attributes only")
    classification = ClassificationMetadata.from_mapping(dict(cls.attrib))

    d = MethodServiceDescriptor(attrs["name"], attrs["version"], semantic, operational, classification)
    check_descriptor(d)
    return d


def parse_descriptor(text) -> MethodServiceDescriptor:
    return descriptor_from_element(xmlio.parse(text))


def signature_element(tag, sig):
    reqs = [xmlio.element("moa:Requires", {"kind": c.kind,
                                           "min": None if c.kind == "NONE" else str(c.min)})
            for c in sig.constraints]
    return xmlio.element(tag, {"metamodel": sig.metamodel_name}, children=reqs)


def descriptor_to_element(d: MethodServiceDescriptor):
    s = d.semantic
    semantic = xmlio.element("moa:Semantic", children=[
        xmlio.element("moa:Intention", text=s.intention.raw_text or s.intention.reconstruct()),
        xmlio.element("moa:Paradigm", text=s.paradigm),
        xmlio.element("moa:Process", children=[xmlio.element("moa:Step", text=t)
                                               for t in s.process_description]),
        signature_element("moa:ProductIn", s.product_in),
        signature_element("moa:ProductOut", s.product_out),
    ])
    operations = []
    for op in d.operational.operations:
        inp = xmlio.element("moa:Input", {"message": "PRODUCT", "metamodel": op.input_metamodel},
                            children=[xmlio.element("moa:Param", {"name": p}) for p in op.params])
        out = xmlio.element("moa:Output", {"message": "PRODUCT", "metamodel": op.output_metamodel})
        operations.append(xmlio.element("moa:Operation", {"name": op.name}, children=[inp, out]))
    operational = xmlio.element("moa:Operational", {"endpoint": d.operational.endpoint},
                                children=operations)
    classification = xmlio.element("moa:Classification",
                                   {k: ", ".join(v) for k, v in d.classification.values})
    return xmlio.element("moa:MethodService", {"name": d.service_name, "version": d.version},
                         children=[semantic, operational, classification])


def serialize_descriptor(d: MethodServiceDescriptor) -> str:
    return xmlio.write(descriptor_to_element(d))
