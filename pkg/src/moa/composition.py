"""Method processes: sequence/parallel aggregation of method services.

Parallel branches all receive the same input. Their results are merged only
when the branches changed disjoint model elements; any overlap raises
MergeConflict instead of letting one branch silently win.
"""

import hashlib
import logging
import re
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import xmlio
from .descriptor import Constraint, ProductSignature, signature_of
from .errors import (
    EmptyProcess,
    InvocationFailure,
    MergeConflict,
    MetamodelMismatch,
    MoaError,
    NotFound,
    SchemaViolation,
    ServiceFault,
)
from .model import IDENTIFIER, ModelDocument, Violation, serialize_model, validate_model
from .retrieval import shape_satisfies
from .services import FaultEnvelope, InvokeEnvelope, handle_invoke, invoke_remote, parse_response, serialize_invoke

logger = logging.getLogger(__name__)

NAMESPACE = "urn:moa:process:1"


@dataclass(frozen=True)
class Invoke:
    operation: str
    service_ref: str | None = None
    service_id: str | None = None
    params: tuple = ()

    @property
    def ref(self) -> str:
        return self.service_id or self.service_ref


@dataclass(frozen=True)
class Seq:
    steps: tuple


@dataclass(frozen=True)
class Par:
    branches: tuple


@dataclass(frozen=True)
class MethodProcess:
    name: str
    root: object


def invokes(block):
    """All Invoke nodes in program order."""
    if isinstance(block, Invoke):
        return [block]
    children = block.steps if isinstance(block, Seq) else block.branches
    return [i for c in children for i in invokes(c)]


# XML

def _block(elem, path):
    if elem.tag == "moa:Invoke":
        a = xmlio.check_attrs(elem, path, required=("operation",), optional=("service", "id"))
        xmlio.no_text(elem, path)
        if ("service" in a) == ("id" in a):
            raise SchemaViolation(f"{path}: exactly one of service= or id= required")
        params = []
        for p in elem:
            if p.tag != "moa:Param":
                raise SchemaViolation(f"{path}: unexpected <{p.tag}>")
            pa = xmlio.check_attrs(p, f"{path}/Param", required=("name", "value"))
            if pa["name"] in dict(params):
                raise SchemaViolation(f"{path}: parameter {pa['name']!r} repeated")
            params.append((pa["name"], pa["value"]))
        return Invoke(a["operation"], a.get("service"), a.get("id"), tuple(params))
    if elem.tag == "moa:Seq":
        xmlio.check_attrs(elem, path)
        xmlio.no_text(elem, path)
        if not len(elem):
            raise SchemaViolation(f"{path}: empty <moa:Seq>")
        return Seq(tuple(_block(c, f"{path}/{i}") for i, c in enumerate(elem)))
    if elem.tag == "moa:Par":
        xmlio.check_attrs(elem, path)
        xmlio.no_text(elem, path)
        branches = []
        for i, b in enumerate(elem):
            bpath = f"{path}/{i}"
            if b.tag != "moa:Branch":
                raise SchemaViolation(f"{bpath}: <moa:Par> holds <moa:Branch> children only")
            xmlio.check_attrs(b, bpath)
            xmlio.no_text(b, bpath)
            kids = [_block(c, f"{bpath}/{j}") for j, c in enumerate(b)]
            if not kids:
                raise SchemaViolation(f"{bpath}: empty branch")
            branches.append(kids[0] if len(kids) == 1 else Seq(tuple(kids)))
        if len(branches) < 2:
            raise SchemaViolation(f"{path}: <moa:Par> needs at least two branches")
        return Par(tuple(branches))
    raise SchemaViolation(f"{path}: unexpected <{elem.tag}>")


def parse_process(text) -> MethodProcess:
    root = xmlio.parse(text)
    xmlio.expect_tag(root, "moa:Process")
    a = xmlio.check_attrs(root, "Process", required=("name",), namespace=NAMESPACE)
    xmlio.no_text(root, "Process")
    if not IDENTIFIER.match(a["name"]):
        raise SchemaViolation(f"Process: {a['name']!r} is not an identifier")
    kids = list(root)
    if not kids:
        raise EmptyProcess(f"process {a['name']} has no steps")
    if len(kids) > 1:
        raise SchemaViolation("Process: wrap several steps in <moa:Seq>")
    return MethodProcess(a["name"], _block(kids[0], "Process"))


def _block_element(block):
    if isinstance(block, Invoke):
        attrs = {"service": block.service_ref} if block.service_id is None else {"id": block.service_id}
        attrs["operation"] = block.operation
        return xmlio.element("moa:Invoke", attrs, children=[
            xmlio.element("moa:Param", {"name": k, "value": v}) for k, v in block.params])
    if isinstance(block, Seq):
        return xmlio.element("moa:Seq", children=[_block_element(s) for s in block.steps])
    return xmlio.element("moa:Par", children=[
        xmlio.element("moa:Branch", children=[_block_element(b)]) for b in block.branches])


def serialize_process(p: MethodProcess) -> str:
    return xmlio.write(xmlio.element("moa:Process", {"name": p.name}, children=[_block_element(p.root)]))


# static validation

@dataclass
class ProcessReport:
    violations: list = field(default_factory=list)
    overlap_checks: list = field(default_factory=list)  # Par paths needing the runtime check

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path, rule, message=""):
        self.violations.append(Violation(path, rule, message))

    def rules(self):
        return [v.rule for v in self.violations]


def _children(block, path):
    items = block.steps if isinstance(block, Seq) else block.branches
    return [(c, f"{path}.{i}") for i, c in enumerate(items)]


def _meet(shapes):
    """Lower bounds every branch output is guaranteed to meet."""
    if any(s is None for s in shapes) or len({s.metamodel_name for s in shapes}) != 1:
        return None
    bounds = [s.bounds() for s in shapes]
    common = set.intersection(*(set(b) for b in bounds))
    return ProductSignature(shapes[0].metamodel_name,
                            tuple(Constraint(k, min(b[k] for b in bounds)) for k in sorted(common)))


def _chase(block, path, shape, registry, report):
    if isinstance(block, Invoke):
        try:
            record = registry.resolve(block.ref)
        except NotFound as exc:
            report.add(path, "UnresolvedService", str(exc))
            return None
        d = record.descriptor
        op = d.operational.operation(block.operation)
        if op is None:
            report.add(path, "UnknownOperation", f"{d.ref} has no operation {block.operation!r}")
            return None
        if set(dict(block.params)) != set(op.params):
            report.add(path, "ParamMismatch",
                       f"{block.operation} takes {sorted(op.params)}, got {sorted(dict(block.params))}")
        if shape is not None:
            try:
                if not shape_satisfies(shape, d.semantic.product_in):
                    report.add(path, "ShapeIncompatibility",
                               f"incoming shape does not meet {d.ref} input "
                               + ", ".join(map(str, d.semantic.product_in.constraints)))
            except MetamodelMismatch as exc:
                report.add(path, "ShapeIncompatibility", str(exc))
        return d.semantic.product_out
    if isinstance(block, Seq):
        for child, cpath in _children(block, path):
            shape = _chase(child, cpath, shape, registry, report)
        return shape
    report.overlap_checks.append(path)
    return _meet([_chase(child, cpath, shape, registry, report) for child, cpath in _children(block, path)])


def validate_process(p: MethodProcess, registry_view, input_doc: ModelDocument | None = None) -> ProcessReport:
    """Resolve services and operations and chase product signatures along sequences.

    Without ``input_doc`` the first step's input shape is unknown and not checked.
    """
    report = ProcessReport()
    shape = signature_of(input_doc) if input_doc is not None else None
    _chase(p.root, "0", shape, registry_view, report)
    return report


# change sets and merging

def _root(ident: str) -> str:
    return re.split(r"[.\[]", ident, maxsplit=1)[0]


@dataclass(frozen=True)
class ChangeSet:
    """Element identifiers: ``Class``, ``Class.attr``, ``Assoc``, ``Assoc.attr``, ``Assoc[a]``."""

    added: frozenset = frozenset()
    removed: frozenset = frozenset()
    modified: frozenset = frozenset()
    references: frozenset = frozenset()  # classes that added/modified ends point at
    removed_classes: frozenset = frozenset()

    @property
    def touched(self) -> frozenset:
        return self.added | self.removed | self.modified

    @property
    def empty(self) -> bool:
        return not self.touched


def _diff_attributes(owner, base_attrs, out_attrs, added, removed, modified):
    b = {a.name: a for a in base_attrs}
    o = {a.name: a for a in out_attrs}
    removed.update(f"{owner}.{n}" for n in b.keys() - o.keys())
    added.update(f"{owner}.{n}" for n in o.keys() - b.keys())
    modified.update(f"{owner}.{n}" for n in b.keys() & o.keys() if b[n] != o[n])


def changeset(base: ModelDocument, out: ModelDocument) -> ChangeSet:
    added, removed, modified, refs = set(), set(), set(), set()
    if base.model_name != out.model_name:
        modified.add("@model")
    bc = {c.name: c for c in base.classes}
    oc = {c.name: c for c in out.classes}
    removed_classes = bc.keys() - oc.keys()
    removed.update(removed_classes)
    added.update(oc.keys() - bc.keys())
    for n in bc.keys() & oc.keys():
        _diff_attributes(n, bc[n].attributes, oc[n].attributes, added, removed, modified)

    ba = {a.name: a for a in base.associations}
    oa = {a.name: a for a in out.associations}
    removed.update(ba.keys() - oa.keys())
    for n in oa.keys() - ba.keys():
        added.add(n)
        refs.update((oa[n].end_a.class_ref, oa[n].end_b.class_ref))
    for n in ba.keys() & oa.keys():
        for label, eb, eo in (("a", ba[n].end_a, oa[n].end_a), ("b", ba[n].end_b, oa[n].end_b)):
            if eb != eo:
                modified.add(f"{n}[{label}]")
                refs.add(eo.class_ref)
        _diff_attributes(n, ba[n].attributes, oa[n].attributes, added, removed, modified)
    return ChangeSet(frozenset(added), frozenset(removed), frozenset(modified), frozenset(refs),
                     frozenset(removed_classes))


def overlap(c1: ChangeSet, c2: ChangeSet) -> set:
    """Identifiers both change sets touch, counting containment and dangling references."""
    contested = set()
    for x in c1.touched:
        for y in c2.touched:
            if x == y:
                contested.add(x)
            elif _root(x) == y or _root(y) == x:
                contested.update((x, y))
    contested.update(c1.removed_classes & c2.references)
    contested.update(c2.removed_classes & c1.references)
    return contested


def _pick(base, versions):
    """The single branch version that differs from base, else base."""
    for v in versions:
        if v != base:
            return v
    return base


def _merge_named(base, outs, merge_item):
    base_map = {x.name: x for x in base}
    out_maps = [{x.name: x for x in out} for out in outs]
    removed = {n for m in out_maps for n in base_map if n not in m}
    runs = defaultdict(list)  # anchor name (None = start) -> runs of additions
    for out in outs:
        anchor, run = None, []
        for x in out:
            if x.name in base_map:
                if run:
                    runs[anchor].append(run)
                anchor, run = x.name, []
            else:
                run.append(x)
        if run:
            runs[anchor].append(run)

    result = []

    def emit(anchor):
        for run in sorted(runs[anchor], key=lambda r: r[0].name):
            result.extend(run)

    emit(None)
    for name, item in base_map.items():
        if name not in removed:
            result.append(merge_item(item, [m[name] for m in out_maps]))
        emit(name)
    return tuple(result)


def _merge_class(base, versions):
    attrs = _merge_named(base.attributes, [v.attributes for v in versions], _pick)
    return type(base)(base.name, attrs)


def _merge_association(base, versions):
    attrs = _merge_named(base.attributes, [v.attributes for v in versions], _pick)
    return type(base)(base.name, _pick(base.end_a, [v.end_a for v in versions]),
                      _pick(base.end_b, [v.end_b for v in versions]), attrs)


def merge_parallel(base: ModelDocument, outputs) -> ModelDocument:
    outputs = list(outputs)
    if len(outputs) < 2:
        raise ValueError("merge needs at least two branch outputs")
    sets = [changeset(base, o) for o in outputs]
    contested = set()
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            contested |= overlap(sets[i], sets[j])
    if contested:
        raise MergeConflict(contested)
    merged = ModelDocument(
        _pick(base.model_name, [o.model_name for o in outputs]),
        _merge_named(base.classes, [o.classes for o in outputs], _merge_class),
        _merge_named(base.associations, [o.associations for o in outputs], _merge_association),
    )
    report = validate_model(merged)
    if not report.ok:
        raise MergeConflict(v.path for v in report.violations)
    return merged


# execution

def digest(doc: ModelDocument) -> str:
    return hashlib.sha256(serialize_model(doc).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TraceEntry:
    step_path: str
    service_id: str
    operation: str
    input_digest: str
    output_digest: str
    duration: float
    stages: tuple = ()

    def line(self) -> str:
        stages = ",".join(s.name for s in self.stages)
        return (f"{self.step_path}\t{self.service_id}\t{self.operation}\t{self.input_digest[:16]}\t"
                f"{self.output_digest[:16]}\t{self.duration * 1000:.1f}ms\t{stages}")


@dataclass
class ExecutionTrace:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)


class HttpInvoker:
    """Calls the endpoint named in the service's operational descriptor."""

    def __init__(self, timeout: float = 30.0):
        self.timeout = timeout

    def __call__(self, record, operation, params, doc):
        return invoke_remote(record.descriptor.operational.endpoint, operation, params, doc, self.timeout)


class LocalInvoker:
    """Runs the same envelope pipeline in-process, without HTTP."""

    def __call__(self, record, operation, params, doc):
        text = handle_invoke(serialize_invoke(InvokeEnvelope(operation, tuple(params), doc)),
                             record.descriptor)
        reply = parse_response(text)
        if isinstance(reply, FaultEnvelope):
            raise ServiceFault("", reply.code, reply.message, reply.stage)
        return reply.product, reply.stages


def _run(block, path, doc, invoker, registry):
    if isinstance(block, Invoke):
        try:
            record = registry.resolve(block.ref)
        except MoaError as exc:
            raise InvocationFailure(path, exc) from None
        started = time.perf_counter()
        try:
            out, stages = invoker(record, block.operation, block.params, doc)
        except ServiceFault as f:
            raise ServiceFault(path, f.fault_code, f.fault_message, f.stage) from None
        except (MoaError, OSError) as exc:
            raise InvocationFailure(path, exc) from None
        entry = TraceEntry(path, record.service_id, block.operation, digest(doc), digest(out),
                           time.perf_counter() - started, tuple(stages))
        logger.debug("step %s %s.%s done", path, record.descriptor.ref, block.operation)
        return out, [entry]
    if isinstance(block, Seq):
        entries = []
        for child, cpath in _children(block, path):
            doc, sub = _run(child, cpath, doc, invoker, registry)
            entries += sub
        return doc, entries
    children = _children(block, path)
    with ThreadPoolExecutor(max_workers=len(children)) as pool:
        futures = [pool.submit(_run, child, cpath, doc, invoker, registry) for child, cpath in children]
        errors = [f.exception() for f in futures]
    for err in errors:
        if err is not None:
            raise err
    results = [f.result() for f in futures]
    merged = merge_parallel(doc, [r[0] for r in results])
    return merged, [e for r in results for e in r[1]]


def execute(p: MethodProcess, doc: ModelDocument, invoker=None, registry=None):
    """Run the process; returns ``(ModelDocument, ExecutionTrace)``.

    Services are resolved against ``registry`` at execution time, so a newly
    published version is picked up by a bare-name reference.
    """
    if registry is None:
        raise ValueError("execute needs a registry view to resolve services")
    out, entries = _run(p.root, "0", doc, invoker or HttpInvoker(), registry)
    return out, ExecutionTrace(entries)
