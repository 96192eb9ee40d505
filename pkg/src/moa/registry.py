"""The method registry: journaled store, query API, HTTP host and client.

Journal format, one event per line (UTF-8)::

    P <moa:Record .../>      published record, serialized on a single line
    R svc-000007             removal

The in-memory map is always the replay of the journal. A final line without
its newline is a torn write from a crash and is dropped on replay.
"""

import logging
import os
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass

from . import descriptor as desc
from . import framework, transport, xmlio
from .errors import (
    CorruptJournal,
    DuplicateService,
    EmptyQuery,
    InvalidDescriptor,
    MoaError,
    NotFound,
    SchemaViolation,
    StorageFailure,
    TransportError,
)
from .retrieval import QuerySpec, SynonymTable, rank

logger = logging.getLogger(__name__)

ID_PATTERN = re.compile(r"svc-(\d{6,})\Z")


@dataclass(frozen=True)
class RegistryRecord:
    service_id: str
    descriptor: desc.MethodServiceDescriptor
    published_at: int
    provider_label: str = ""


def record_to_element(r: RegistryRecord):
    return xmlio.element("moa:Record", {"id": r.service_id, "published_at": str(r.published_at),
                                        "provider": r.provider_label},
                         children=[desc.descriptor_to_element(r.descriptor)])


def record_from_element(e) -> RegistryRecord:
    xmlio.expect_tag(e, "moa:Record")
    attrs = xmlio.check_attrs(e, "Record", required=("id", "published_at", "provider"))
    xmlio.no_text(e, "Record")
    if len(e) != 1:
        raise SchemaViolation("Record: exactly one <moa:MethodService> expected")
    if not attrs["published_at"].isdigit():
        raise SchemaViolation("Record: published_at must be integer seconds")
    return RegistryRecord(attrs["id"], desc.descriptor_from_element(e[0]),
                          int(attrs["published_at"]), attrs["provider"])


def serialize_record(r: RegistryRecord, *, pretty=True) -> str:
    return xmlio.write(record_to_element(r), pretty=pretty, declaration=pretty)


def parse_record(text) -> RegistryRecord:
    return record_from_element(xmlio.parse(text))


def _version_key(version: str):
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.split(r"[.\-]", version))


def split_ref(ref: str):
    """``Name@1.0`` -> ``("Name", "1.0")``; a bare name -> ``("Name", None)``."""
    name, sep, version = ref.rpartition("@")
    return (name, version) if sep else (ref, None)


def pick_version(records, name, version):
    matches = [r for r in records if r.descriptor.service_name == name
               and (version is None or r.descriptor.version == version)]
    if not matches:
        raise NotFound(f"no service {name}{'@' + version if version else ''}")
    return max(matches, key=lambda r: _version_key(r.descriptor.version))


class RegistryStore:
    """Records keyed by service id, persisted to an append-only journal.

    ``journal_path=None`` keeps everything in memory (used by tests and by
    the local composition view).
    """

    def __init__(self, journal_path=None, synonyms: SynonymTable | None = None, clock=time.time):
        self.journal_path = journal_path
        self.synonyms = synonyms if synonyms is not None else SynonymTable.default()
        self.records: dict = {}
        self._clock = clock
        self._next = 1
        self._lock = threading.Lock()
        if journal_path is not None:
            self._replay()

    def _replay(self):
        if not os.path.exists(self.journal_path):
            return
        with open(self.journal_path, "rb") as f:
            data = f.read()
        lines = data.split(b"\n")
        torn = lines.pop()  # empty when the file ends with a newline
        if torn:
            logger.warning("dropping torn final journal line (%d bytes)", len(torn))
            with open(self.journal_path, "r+b") as f:
                f.truncate(len(data) - len(torn))
        for n, raw in enumerate(lines, 1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise CorruptJournal(n, "not UTF-8") from None
            if line.startswith("P "):
                try:
                    record = parse_record(line[2:])
                except MoaError as exc:
                    raise CorruptJournal(n, str(exc)) from None
                m = ID_PATTERN.match(record.service_id)
                if not m or record.service_id in self.records:
                    raise CorruptJournal(n, f"bad or repeated id {record.service_id!r}")
                self.records[record.service_id] = record
                self._next = max(self._next, int(m.group(1)) + 1)
            elif line.startswith("R "):
                sid = line[2:]
                if sid not in self.records:
                    raise CorruptJournal(n, f"removal of unknown id {sid!r}")
                del self.records[sid]
            else:
                raise CorruptJournal(n, "expected 'P <xml>' or 'R <id>'")

    def _append(self, line: str):
        if self.journal_path is None:
            return
        try:
            with open(self.journal_path, "a", encoding="utf-8", newline="\n") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise StorageFailure(str(exc)) from None

    def publish(self, descriptor: desc.MethodServiceDescriptor, provider_label: str = "") -> str:
        try:
            desc.check_descriptor(descriptor)
        except MoaError as exc:
            raise InvalidDescriptor(str(exc)) from None
        with self._lock:
            for r in self.records.values():
                if (r.descriptor.service_name, r.descriptor.version) == (descriptor.service_name,
                                                                         descriptor.version):
                    raise DuplicateService(descriptor.ref)
            record = RegistryRecord(f"svc-{self._next:06d}", descriptor, int(self._clock()),
                                    provider_label)
            self._append("P " + serialize_record(record, pretty=False))
            self._next += 1
            self.records[record.service_id] = record
        logger.info("published %s as %s", descriptor.ref, record.service_id)
        return record.service_id

    def lookup(self, service_id: str) -> RegistryRecord:
        try:
            return self.records[service_id]
        except KeyError:
            raise NotFound(service_id) from None

    def remove(self, service_id: str):
        with self._lock:
            if service_id not in self.records:
                raise NotFound(service_id)
            self._append("R " + service_id)
            del self.records[service_id]

    def all_records(self):
        with self._lock:
            return sorted(self.records.values(), key=lambda r: r.service_id)

    def find(self, name: str, version: str | None = None):
        return [r for r in self.all_records() if r.descriptor.service_name == name
                and (version is None or r.descriptor.version == version)]

    def resolve(self, ref: str) -> RegistryRecord:
        """Resolve a service id or ``Name@Version`` (bare name: highest version)."""
        if ID_PATTERN.match(ref):
            return self.lookup(ref)
        name, version = split_ref(ref)
        return pick_version(self.all_records(), name, version)

    def query(self, q: QuerySpec):
        q.check()
        filters = [(framework.attribute(k).key, v) for k, v in q.classification_filters]
        candidates = [r for r in self.all_records()
                      if all(r.descriptor.classification.matches(k, v) for k, v in filters)]
        return rank(q, candidates, self.synonyms)


# query wire format

def query_to_element(q: QuerySpec):
    kids = []
    if q.intention_text:
        kids.append(xmlio.element("moa:Intention", text=q.intention_text))
    kids += [xmlio.element("moa:Keyword", {"scope": "paradigm", "value": k}) for k in q.paradigm_keywords]
    kids += [xmlio.element("moa:Keyword", {"scope": "process", "value": k}) for k in q.process_keywords]
    if q.product_shape is not None:
        sig = desc.signature_element("moa:ProductShape", q.product_shape)
        kids.append(sig)
    kids += [xmlio.element("moa:Where", {"attr": k, "value": v}) for k, v in q.classification_filters]
    return xmlio.element("moa:Query", children=kids)


def parse_query(text) -> QuerySpec:
    root = xmlio.parse(text)
    xmlio.expect_tag(root, "moa:Query")
    xmlio.check_attrs(root, "Query")
    xmlio.no_text(root, "Query")
    intention, paradigm, process, shape, where = None, [], [], None, []
    for e in root:
        if e.tag == "moa:Intention":
            intention = xmlio.leaf_text(e, "Query/Intention")
        elif e.tag == "moa:Keyword":
            a = xmlio.check_attrs(e, "Query/Keyword", required=("scope", "value"))
            if a["scope"] not in ("paradigm", "process"):
                raise SchemaViolation(f"Query/Keyword: scope {a['scope']!r}")
            (paradigm if a["scope"] == "paradigm" else process).append(a["value"])
        elif e.tag == "moa:ProductShape":
            shape = desc.signature_from_element(e, "Query/ProductShape")
        elif e.tag == "moa:Where":
            a = xmlio.check_attrs(e, "Query/Where", required=("attr", "value"))
            framework.attribute(a["attr"]).normalize(a["value"])
            where.append((a["attr"], a["value"]))
        else:
            raise SchemaViolation(f"Query: unexpected <{e.tag}>")
    return QuerySpec(intention, tuple(paradigm), tuple(process), shape, tuple(where))


def results_to_text(results) -> str:
    entries = [xmlio.element("moa:Entry", {"score": repr(float(score))},
                             children=[record_to_element(r)]) for r, score in results]
    return xmlio.write(xmlio.element("moa:Results", children=entries))


def parse_results(text):
    root = xmlio.parse(text)
    xmlio.expect_tag(root, "moa:Results")
    out = []
    for e in root:
        xmlio.expect_tag(e, "moa:Entry", "Results")
        a = xmlio.check_attrs(e, "Results/Entry", required=("score",))
        out.append((record_from_element(e[0]), float(a["score"])))
    return out


def records_to_text(records) -> str:
    return xmlio.write(xmlio.element("moa:Records", children=[record_to_element(r) for r in records]))


def parse_records(text):
    root = xmlio.parse(text)
    xmlio.expect_tag(root, "moa:Records")
    return [record_from_element(e) for e in root]


# HTTP host

_STATUS = {NotFound: 404, DuplicateService: 409, InvalidDescriptor: 422, EmptyQuery: 400,
           StorageFailure: 500}


class RegistryHandler(transport.Handler):
    store: RegistryStore  # set on the subclass built by make_server

    def _route(self):
        parsed = urllib.parse.urlsplit(self.path)
        return parsed.path.rstrip("/") or "/", urllib.parse.parse_qs(parsed.query)

    def _fail(self, exc: MoaError):
        status = next((s for cls, s in _STATUS.items() if isinstance(exc, cls)), 400)
        self.reply_error(status, exc.code, exc.message)

    def do_GET(self):
        path, params = self._route()
        try:
            if path == "/services":
                name = params.get("name", [None])[0]
                version = params.get("version", [None])[0]
                records = (self.store.find(name, version) if name else self.store.all_records())
                self.reply(200, records_to_text(records))
            elif path.startswith("/services/"):
                self.reply(200, serialize_record(self.store.lookup(path[len("/services/"):])))
            else:
                self.reply_error(404, "NotFound", path)
        except MoaError as exc:
            self._fail(exc)

    def do_POST(self):
        path, params = self._route()
        try:
            body = self.read_body()
            if path == "/services":
                try:
                    d = desc.parse_descriptor(body)
                except MoaError as exc:
                    raise InvalidDescriptor(str(exc)) from None
                sid = self.store.publish(d, params.get("provider", [""])[0])
                self.reply(201, xmlio.write(xmlio.element("moa:Published", {"id": sid})))
            elif path == "/services/query":
                self.reply(200, results_to_text(self.store.query(parse_query(body))))
            else:
                self.reply_error(404, "NotFound", path)
        except MoaError as exc:
            self._fail(exc)
        except ValueError as exc:
            self.reply_error(400, "BadRequest", str(exc))

    def do_DELETE(self):
        path, _ = self._route()
        try:
            if not path.startswith("/services/"):
                raise NotFound(path)
            self.store.remove(path[len("/services/"):])
            self.reply(204)
        except MoaError as exc:
            self._fail(exc)


def make_server(store: RegistryStore, host="127.0.0.1", port=0) -> transport.Server:
    handler = type("BoundRegistryHandler", (RegistryHandler,), {"store": store})
    return transport.Server((host, port), handler)


# client

def _error_classes():
    import inspect

    from . import errors
    return {cls.code: cls for _, cls in inspect.getmembers(errors, inspect.isclass)
            if issubclass(cls, MoaError) and cls.__init__ is MoaError.__init__}


_ERRORS = _error_classes()


class RegistryClient:
    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, method, path, body=None, ok=(200,)):
        status, text = transport.request(method, self.base_url + path, body, self.timeout)
        if status in ok:
            return text
        code, message = transport.error_from_body(text)
        exc = _ERRORS.get(code)
        if exc is None:
            raise TransportError(f"HTTP {status} {code}: {message}")
        raise exc(message)

    def publish(self, descriptor_text, provider_label: str = "") -> str:
        """Accepts descriptor text, raw bytes or a parsed descriptor."""
        if isinstance(descriptor_text, bytes):
            descriptor_text = descriptor_text.decode("utf-8")
        elif not isinstance(descriptor_text, str):
            descriptor_text = desc.serialize_descriptor(descriptor_text)
        qs = "?" + urllib.parse.urlencode({"provider": provider_label}) if provider_label else ""
        text = self._call("POST", "/services" + qs, descriptor_text, ok=(201,))
        return xmlio.parse(text).get("id")

    def lookup(self, service_id: str) -> RegistryRecord:
        return parse_record(self._call("GET", "/services/" + urllib.parse.quote(service_id)))

    def remove(self, service_id: str):
        self._call("DELETE", "/services/" + urllib.parse.quote(service_id), ok=(204,))

    def all_records(self):
        return parse_records(self._call("GET", "/services"))

    def find(self, name, version=None):
        params = {"name": name} | ({"version": version} if version else {})
        return parse_records(self._call("GET", "/services?" + urllib.parse.urlencode(params)))

    def resolve(self, ref: str) -> RegistryRecord:
        if ID_PATTERN.match(ref):
            return self.lookup(ref)
        name, version = split_ref(ref)
        return pick_version(self.find(name, version), name, version)

    def query(self, q: QuerySpec):
        q.check()
        return parse_results(self._call("POST", "/services/query", xmlio.write(query_to_element(q))))
