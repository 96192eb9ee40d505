"""Bundled fixtures: sample models, built-in descriptors, processes and the framework table.

Also hosts the end-to-end walkthrough that publishes the built-in services,
retrieves Objectify by intention and runs it on the Person/Company model.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .. import framework, xmlio
from ..composition import HttpInvoker, execute, parse_process, validate_process
from ..descriptor import parse_descriptor, serialize_descriptor
from ..errors import MoaError, SchemaViolation
from ..model import parse_model, serialize_model
from ..registry import RegistryClient
from ..retrieval import QuerySpec
from ..services import STAGES

logger = logging.getLogger(__name__)

FRAMEWORK_NAMESPACE = "urn:moa:framework:1"
COLUMNS = ("Fragment", "Chunk", "Component", "OPF Fragment", "Method Service")
SERVICE_COLUMN = "Method Service"
TUTORIAL_QUERY = "objectify relationship"


def data_dir() -> Path:
    return Path(str(resources.files(__name__).joinpath("data")))


def fixture_path(*parts) -> Path:
    return data_dir().joinpath(*parts)


def model_paths():
    return sorted(fixture_path("models").glob("*.ximodel"))


def descriptor_paths():
    return sorted(fixture_path("descriptors").glob("*.msd.xml"))


def process_paths():
    return sorted(fixture_path("processes").glob("*.mproc.xml"))


def load_model(name: str):
    return parse_model(fixture_path("models", f"{name}.ximodel").read_bytes())


def load_descriptor(name: str):
    return parse_descriptor(fixture_path("descriptors", f"{name}.msd.xml").read_bytes())


def load_process(name: str):
    return parse_process(fixture_path("processes", f"{name}.mproc.xml").read_bytes())


def golden_path(name: str) -> Path:
    return fixture_path("golden", f"{name}.ximodel")


# the comparison table

@dataclass(frozen=True)
class TableRow:
    key: str
    view: str
    label: str
    domain_text: str
    cells: tuple            # (column, printed text) in column order
    service_values: tuple   # canonical values for the Method Service column

    def cell(self, column: str) -> str:
        return dict(self.cells)[column]


@dataclass(frozen=True)
class AppendixTable:
    title: str
    rows: tuple

    def row(self, key: str) -> TableRow:
        for r in self.rows:
            if r.key == key:
                return r
        raise KeyError(key)

    def service_column(self) -> dict:
        return {r.key: r.service_values for r in self.rows}


def parse_appendix(text) -> AppendixTable:
    root = xmlio.parse(text)
    xmlio.expect_tag(root, "moa:Framework", "/")
    xmlio.check_attrs(root, "/", required=("title",), namespace=FRAMEWORK_NAMESPACE)
    rows = []
    for view in root:
        vpath = f"/View[{view.get('name')}]"
        xmlio.expect_tag(view, "moa:View", vpath)
        xmlio.check_attrs(view, vpath, required=("name",))
        for attr in view:
            apath = f"{vpath}/Attribute[{attr.get('key')}]"
            xmlio.expect_tag(attr, "moa:Attribute", apath)
            xmlio.check_attrs(attr, apath, required=("key", "label", "domain"))
            cells, values = [], ()
            for cell in attr:
                cpath = f"{apath}/Cell[{cell.get('column')}]"
                xmlio.expect_tag(cell, "moa:Cell", cpath)
                xmlio.check_attrs(cell, cpath, required=("column", "text"))
                cells.append((cell.get("column"), cell.get("text")))
                if cell.get("column") == SERVICE_COLUMN:
                    for v in cell:
                        xmlio.expect_tag(v, "moa:Value", cpath)
                    values = tuple(v.text or "" for v in cell)
            if tuple(c for c, _ in cells) != COLUMNS:
                raise SchemaViolation(f"{apath}: columns must be {', '.join(COLUMNS)}")
            rows.append(TableRow(attr.get("key"), view.get("name"), attr.get("label"),
                                 attr.get("domain"), tuple(cells), values))
    return AppendixTable(root.get("title"), tuple(rows))


def load_appendix() -> AppendixTable:
    return parse_appendix(fixture_path("appendix.xml").read_bytes())


def check_appendix(table: AppendixTable) -> list:
    """Problems found when checking the table against the framework; empty when consistent."""
    problems = []
    keys = [r.key for r in table.rows]
    expected = [a.key for a in framework.FRAMEWORK]
    if sorted(keys) != sorted(expected):
        problems.append(f"attribute set differs: {sorted(set(keys) ^ set(expected))}")
    for r in table.rows:
        try:
            attr = framework.attribute(r.key)
        except MoaError as exc:
            problems.append(str(exc))
            continue
        if attr.view != r.view:
            problems.append(f"{r.key}: view {r.view!r}, framework says {attr.view!r}")
        if not r.service_values:
            problems.append(f"{r.key}: no Method Service values")
        for v in r.service_values:
            try:
                attr.normalize(v)
            except MoaError as exc:
                problems.append(str(exc))
        if not attr.multi and len(r.service_values) > 1:
            problems.append(f"{r.key}: single-valued attribute holds {len(r.service_values)} values")
    return problems


# tutorial

class TutorialFailed(MoaError):
    code = "TutorialFailed"


def with_endpoint(descriptor_bytes: bytes, endpoint: str) -> bytes:
    """Same descriptor, advertised at ``endpoint``."""
    d = parse_descriptor(descriptor_bytes)
    d = dataclasses.replace(d, operational=dataclasses.replace(d.operational, endpoint=endpoint))
    return serialize_descriptor(d).encode("utf-8")


@dataclass
class Transcript:
    lines: list = field(default_factory=list)
    output: object = None
    trace: object = None

    def say(self, line: str):
        logger.info("%s", line)
        self.lines.append(line)

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


def run_tutorial(registry_url: str, descriptors=(), model_path=None, process_path=None,
                 output_path=None) -> Transcript:
    """Publish, search, describe and run; raises TutorialFailed naming the failing stage.

    ``descriptors`` are descriptor bytes to publish first (already published
    services are left alone); providers must be listening at their endpoints.
    """
    model_path = Path(model_path or fixture_path("models", "person_company.ximodel"))
    process_path = Path(process_path or fixture_path("processes", "objectify_worksfor.mproc.xml"))
    client = RegistryClient(registry_url)
    t = Transcript()

    t.say(f"# publish ({registry_url})")
    for raw in descriptors:
        d = parse_descriptor(raw)
        if client.find(d.service_name, d.version):
            t.say(f"{d.ref}\talready published")
            continue
        t.say(f"{d.ref}\t{client.publish(raw.decode('utf-8'), 'tutorial')}")

    t.say(f"# search {TUTORIAL_QUERY!r}")
    results = client.query(QuerySpec(intention_text=TUTORIAL_QUERY))
    if not results:
        raise TutorialFailed("search: no services matched")
    for record, score in results:
        t.say(f"{record.service_id}\t{record.descriptor.ref}\t{score:.3f}")
    top, top_score = results[0]
    if top.descriptor.service_name != "Objectify":
        raise TutorialFailed(f"search: top result is {top.descriptor.ref}, not Objectify")

    t.say(f"# describe {top.service_id}")
    d = client.lookup(top.service_id).descriptor
    t.say(f"service\t{d.ref}")
    t.say(f"intention\t{d.semantic.intention.raw_text}")
    t.say(f"endpoint\t{d.operational.endpoint}")
    for op in d.operational.operations:
        t.say(f"operation\t{op.name}({', '.join(op.params)})")

    t.say(f"# process run {process_path.name} on {model_path.name}")
    process = parse_process(process_path.read_bytes())
    doc = parse_model(model_path.read_bytes())
    report = validate_process(process, client, doc)
    if not report.ok:
        raise TutorialFailed("process validate: " + "; ".join(f"{v.path} {v.rule}" for v in report.violations))
    out, trace = execute(process, doc, HttpInvoker(), client)
    for entry in trace.entries:
        t.say(entry.line())
    seen = {s.name for e in trace.entries for s in e.stages}
    missing = [s for s in STAGES if s not in seen]
    if missing:
        raise TutorialFailed(f"process run: trace lacks stages {', '.join(missing)}")
    if output_path is not None:
        Path(output_path).write_text(serialize_model(out), encoding="utf-8")
    t.output, t.trace = out, trace
    t.say(f"# done: {len(out.classes)} classes, {len(out.associations)} associations")
    return t
