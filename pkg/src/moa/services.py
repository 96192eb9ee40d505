"""Implementation part of method services: built-in transformations and their host.

An invocation runs five observable stages over the product:

    parse -> instantiate -> transform -> generate -> serialize

Transformations operate on the ObjectGraph, never on XML text.
"""

import logging
from dataclasses import dataclass

from . import transport, xmlio
from .descriptor import MethodServiceDescriptor, parse_descriptor, signature_of
from .errors import (
    AssociationNotFound,
    ClassNotFound,
    MalformedXml,
    MoaError,
    NameCollision,
    PreconditionError,
    SchemaViolation,
    SelfAssociationUnsupported,
    ServiceFault,
    TransportError,
    UnknownImplementation,
    UnknownOperation,
)
from .model import (
    IDENTIFIER,
    AssociationNode,
    ClassNode,
    EndRef,
    ModelDocument,
    Multiplicity,
    ObjectGraph,
    generate,
    instantiate,
    model_from_element,
    model_to_element,
    serialize_model,
    validate_model,
)
from .retrieval import shape_satisfies

logger = logging.getLogger(__name__)

STAGES = ("parse", "instantiate", "transform", "generate", "serialize")
FAULT_CODES = ("SchemaViolation", "PreconditionFailed", "UnknownOperation", "InternalError")


# transformations on the object graph

def objectify_graph(graph: ObjectGraph, association_name: str) -> ObjectGraph:
    """Replace association R(A, B) by class R linked through R_A and R_B."""
    assoc = graph.association_node(association_name)
    if assoc is None:
        raise AssociationNotFound(association_name)
    a, b = assoc.end_a.node, assoc.end_b.node
    if a is b:
        raise SelfAssociationUnsupported(f"{association_name} links {a.name} to itself")
    if graph.class_node(association_name) is not None:
        raise NameCollision(f"class {association_name} already exists")
    link_a, link_b = f"{association_name}_{a.name}", f"{association_name}_{b.name}"
    for name in (link_a, link_b):
        if graph.association_node(name) is not None:
            raise NameCollision(f"association {name} already exists")

    obj = ClassNode(association_name, assoc.attributes)
    graph.classes.append(obj)
    # each R-object has exactly one A and one B; per A there are as many R-objects
    # as the original link count, i.e. the multiplicity that sat at B's end
    replacement = [
        AssociationNode(link_a, EndRef(a, Multiplicity.ONE),
                        EndRef(obj, assoc.end_b.multiplicity, assoc.end_b.role)),
        AssociationNode(link_b, EndRef(b, Multiplicity.ONE),
                        EndRef(obj, assoc.end_a.multiplicity, assoc.end_a.role)),
    ]
    i = graph.associations.index(assoc)
    graph.associations[i:i + 1] = replacement
    return graph


def rename_class_graph(graph: ObjectGraph, old_name: str, new_name: str) -> ObjectGraph:
    node = graph.class_node(old_name)
    if node is None:
        raise ClassNotFound(old_name)
    if not IDENTIFIER.match(new_name or ""):
        raise SchemaViolation(f"{new_name!r} is not an identifier")
    if graph.class_node(new_name) is not None:
        raise NameCollision(f"class {new_name} already exists")
    node.name = new_name  # ends hold the node, so references follow
    return graph


def identity_graph(graph: ObjectGraph) -> ObjectGraph:
    return graph


@dataclass(frozen=True)
class Builtin:
    transform: object
    params: tuple


BUILTINS = {
    "objectify": Builtin(lambda g, p: objectify_graph(g, p["association"]), ("association",)),
    "rename_class": Builtin(lambda g, p: rename_class_graph(g, p["old_name"], p["new_name"]),
                            ("old_name", "new_name")),
    "identity": Builtin(lambda g, p: identity_graph(g), ()),
}


def objectify(doc: ModelDocument, association_name: str) -> ModelDocument:
    return generate(objectify_graph(instantiate(doc), association_name))


def rename_class(doc: ModelDocument, old_name: str, new_name: str) -> ModelDocument:
    return generate(rename_class_graph(instantiate(doc), old_name, new_name))


def identity_service(doc: ModelDocument) -> ModelDocument:
    return generate(identity_graph(instantiate(doc)))


def apply_builtin(operation: str, params: dict, doc: ModelDocument) -> ModelDocument:
    return generate(BUILTINS[operation].transform(instantiate(doc), params))


# envelopes

@dataclass(frozen=True)
class Stage:
    name: str
    detail: str = ""


@dataclass(frozen=True)
class InvokeEnvelope:
    operation: str
    params: tuple
    product: ModelDocument


@dataclass(frozen=True)
class ResultEnvelope:
    product: ModelDocument
    stages: tuple = ()


@dataclass(frozen=True)
class FaultEnvelope:
    code: str
    message: str = ""
    stage: str | None = None


def serialize_invoke(env: InvokeEnvelope) -> str:
    params = [xmlio.element("moa:Param", {"name": k, "value": v}) for k, v in env.params]
    product = xmlio.element("moa:Product", children=[model_to_element(env.product)])
    return xmlio.write(xmlio.element("moa:Invoke", {"operation": env.operation},
                                     children=params + [product]))


def _product_model(elem, path):
    xmlio.check_attrs(elem, path)
    xmlio.no_text(elem, path)
    if len(elem) != 1:
        raise SchemaViolation(f"{path}: exactly one <moa:Model> expected")
    return elem[0]


def _read_invoke(root):
    """Structure check only; the product element is returned unparsed."""
    xmlio.expect_tag(root, "moa:Invoke")
    attrs = xmlio.check_attrs(root, "Invoke", required=("operation",))
    xmlio.no_text(root, "Invoke")
    params, product = [], None
    for e in root:
        if e.tag == "moa:Param" and product is None:
            p = xmlio.check_attrs(e, "Invoke/Param", required=("name", "value"))
            if p["name"] in dict(params):
                raise SchemaViolation(f"Invoke: parameter {p['name']!r} repeated")
            params.append((p["name"], p["value"]))
        elif e.tag == "moa:Product" and product is None:
            product = _product_model(e, "Invoke/Product")
        else:
            raise SchemaViolation(f"Invoke: unexpected <{e.tag}>")
    if product is None:
        raise SchemaViolation("Invoke: missing <moa:Product>")
    return attrs["operation"], tuple(params), product


def parse_invoke(text) -> InvokeEnvelope:
    operation, params, product = _read_invoke(xmlio.parse(text))
    return InvokeEnvelope(operation, params, model_from_element(product))


def serialize_result(env: ResultEnvelope) -> str:
    product = xmlio.element("moa:Product", children=[model_to_element(env.product)])
    trace = xmlio.element("moa:Trace", children=[
        xmlio.element("moa:Stage", {"name": s.name, "detail": s.detail}) for s in env.stages])
    return xmlio.write(xmlio.element("moa:Result", children=[product, trace]))


def serialize_fault(env: FaultEnvelope) -> str:
    return xmlio.write(xmlio.element("moa:Fault", {"code": env.code, "message": env.message,
                                                   "stage": env.stage}))


def parse_response(text):
    """Decode a host reply into a ResultEnvelope or FaultEnvelope."""
    root = xmlio.parse(text)
    if root.tag == "moa:Fault":
        a = xmlio.check_attrs(root, "Fault", required=("code", "message"), optional=("stage",))
        return FaultEnvelope(a["code"], a["message"], a.get("stage"))
    xmlio.expect_tag(root, "moa:Result")
    kids = list(root)
    if not kids or kids[0].tag != "moa:Product":
        raise SchemaViolation("Result: missing <moa:Product>")
    doc = model_from_element(_product_model(kids[0], "Result/Product"))
    stages = []
    for k in kids[1:]:
        xmlio.expect_tag(k, "moa:Trace", "Result")
        for s in k:
            a = xmlio.check_attrs(s, "Result/Trace/Stage", required=("name",), optional=("detail",))
            stages.append(Stage(a["name"], a.get("detail", "")))
    return ResultEnvelope(doc, tuple(stages))


# invocation pipeline

def _shape(doc):
    return f"classes={len(doc.classes)} associations={len(doc.associations)}"


def handle_invoke(text, descriptor: MethodServiceDescriptor, builtins=BUILTINS) -> str:
    """Run one envelope through the pipeline; always answers with an envelope."""
    stage = "parse"
    try:
        try:
            operation, params, product = _read_invoke(xmlio.parse(text))
        except MalformedXml as exc:
            raise SchemaViolation(str(exc)) from None
        op = descriptor.operational.operation(operation)
        if op is None or operation not in builtins:
            return serialize_fault(FaultEnvelope("UnknownOperation",
                                                 f"{descriptor.ref} has no operation {operation!r}",
                                                 stage))
        given = dict(params)
        if set(given) != set(op.params):
            raise SchemaViolation(f"{operation} takes parameters {sorted(op.params)}, got {sorted(given)}")
        doc = model_from_element(product)
        stages = [Stage("parse", _shape(doc))]
        if not shape_satisfies(signature_of(doc, descriptor.semantic.product_in.metamodel_name),
                               descriptor.semantic.product_in):
            raise PreconditionError(f"product does not meet {descriptor.ref} input shape")

        stage = "instantiate"
        graph = instantiate(doc)
        stages.append(Stage("instantiate", f"nodes={graph.node_count}"))

        stage = "transform"
        graph = builtins[operation].transform(graph, given)
        stages.append(Stage("transform", operation + "".join(f" {k}={v}" for k, v in params)))

        stage = "generate"
        out = generate(graph)
        report = validate_model(out)
        if not report.ok:
            raise RuntimeError(f"{operation} produced an invalid model: {report.violations[0]}")
        stages.append(Stage("generate", _shape(out)))

        stage = "serialize"
        stages.append(Stage("serialize", f"bytes={len(serialize_model(out).encode('utf-8'))}"))
        for s in stages:
            logger.debug("%s %s: %s", descriptor.ref, s.name, s.detail)
        return serialize_result(ResultEnvelope(out, tuple(stages)))
    except PreconditionError as exc:
        return serialize_fault(FaultEnvelope("PreconditionFailed", str(exc), stage))
    except UnknownOperation as exc:
        return serialize_fault(FaultEnvelope("UnknownOperation", str(exc), stage))
    except MoaError as exc:
        return serialize_fault(FaultEnvelope("SchemaViolation", str(exc), stage))
    except Exception as exc:  # the host must answer every envelope
        logger.exception("internal error in %s", descriptor.ref)
        return serialize_fault(FaultEnvelope("InternalError", f"{type(exc).__name__}: {exc}", stage))


def check_implementation(descriptor: MethodServiceDescriptor, builtins=BUILTINS):
    for op in descriptor.operational.operations:
        impl = builtins.get(op.name)
        if impl is None:
            raise UnknownImplementation(f"no built-in implementation for operation {op.name!r}")
        if set(impl.params) != set(op.params):
            raise UnknownImplementation(f"{op.name} implementation takes {list(impl.params)}, "
                                        f"descriptor declares {list(op.params)}")


# host

class ProviderHandler(transport.Handler):
    descriptor: MethodServiceDescriptor
    descriptor_bytes: bytes

    def do_GET(self):
        if self.path.rstrip("/") == "/descriptor":
            self.send_response(200)
            self.send_header("Content-Type", transport.XML_TYPE)
            self.send_header("Content-Length", str(len(self.descriptor_bytes)))
            self.end_headers()
            self.wfile.write(self.descriptor_bytes)
        else:
            self.reply_error(404, "NotFound", self.path)

    def do_POST(self):
        if self.path.rstrip("/") != "/invoke":
            self.reply_error(404, "NotFound", self.path)
            return
        try:
            body = self.read_body()
        except ValueError as exc:
            self.reply_error(413, "TooLarge", str(exc))
            return
        self.reply(200, handle_invoke(body, self.descriptor))


def make_provider(descriptor_bytes: bytes, host="127.0.0.1", port=0) -> transport.Server:
    descriptor = parse_descriptor(descriptor_bytes)
    check_implementation(descriptor)
    handler = type("BoundProviderHandler", (ProviderHandler,),
                   {"descriptor": descriptor, "descriptor_bytes": bytes(descriptor_bytes)})
    return transport.Server((host, port), handler)


# client side

def invoke_remote(endpoint: str, operation: str, params, doc: ModelDocument, timeout=30.0):
    """POST an envelope; returns ``(ModelDocument, stages)`` or raises ServiceFault/TransportError."""
    body = serialize_invoke(InvokeEnvelope(operation, tuple(dict(params).items()), doc))
    status, text = transport.request("POST", endpoint, body, timeout)
    if status != 200:
        raise TransportError(f"{endpoint} answered HTTP {status}")
    try:
        reply = parse_response(text)
    except MoaError as exc:
        raise TransportError(f"unreadable reply from {endpoint}: {exc}") from None
    if isinstance(reply, FaultEnvelope):
        raise ServiceFault("", reply.code, reply.message, reply.stage)
    return reply.product, reply.stages
