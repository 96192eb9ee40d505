import dataclasses
import os
import random
import signal
import subprocess
import sys
import threading

import modelgen
import pytest
from conftest import scripted_operations, serving, spawn

from moa import scenario, transport, xmlio
from moa.descriptor import normalize_intention, serialize_descriptor
from moa.errors import CorruptJournal, DomainViolation, DuplicateService, EmptyQuery, InvalidDescriptor, NotFound
from moa.registry import RegistryClient, RegistryStore, make_server, parse_query, query_to_element, serialize_record
from moa.retrieval import QuerySpec

OBJECTIFY = scenario.load_descriptor("objectify")
RENAME = scenario.load_descriptor("rename_class")


def ticking(start=1_700_000_000):
    t = [start]

    def clock():
        t[0] += 1
        return t[0]
    return clock


def test_publish_lookup(store):
    sid = store.publish(OBJECTIFY, "acme")
    r = store.lookup(sid)
    assert r.descriptor == OBJECTIFY and r.provider_label == "acme"
    assert isinstance(r.published_at, int)


def test_duplicate_and_versions(store):
    store.publish(OBJECTIFY)
    with pytest.raises(DuplicateService):
        store.publish(OBJECTIFY)
    sid = store.publish(dataclasses.replace(OBJECTIFY, version="1.1"))
    assert len(store.all_records()) == 2
    assert store.resolve("Objectify").service_id == sid
    assert store.resolve("Objectify@1.0").descriptor.version == "1.0"
    assert store.resolve(sid).service_id == sid


def test_version_order_is_numeric(store):
    for v in ("1.9", "1.10", "1.2"):
        store.publish(dataclasses.replace(OBJECTIFY, version=v))
    assert store.resolve("Objectify").descriptor.version == "1.10"


def test_lookup_and_remove(store):
    with pytest.raises(NotFound):
        store.lookup("nonexistent")
    sid = store.publish(OBJECTIFY)
    store.remove(sid)
    with pytest.raises(NotFound):
        store.lookup(sid)
    with pytest.raises(NotFound):
        store.remove(sid)
    with pytest.raises(NotFound):
        store.resolve("Objectify")


def test_invalid_descriptor_rejected(store):
    bad = dataclasses.replace(OBJECTIFY, service_name="not an id")
    with pytest.raises(InvalidDescriptor):
        store.publish(bad)


def test_ids_monotone_never_reused(tmp_path):
    journal = tmp_path / "j.log"
    s = RegistryStore(journal)
    a = s.publish(OBJECTIFY)
    b = s.publish(RENAME)
    s.remove(b)
    s2 = RegistryStore(journal)
    c = s2.publish(dataclasses.replace(RENAME, version="2.0"))
    assert (a, b, c) == ("svc-000001", "svc-000002", "svc-000003")


def test_query_examples(store):
    store.publish(RENAME)
    store.publish(OBJECTIFY)
    results = store.query(QuerySpec("objectify relationship"))
    assert results[0][0].descriptor.service_name == "Objectify" and results[0][1] == 1.0
    assert store.query(QuerySpec(classification_filters=(("construction_technique", "agile"),))) == []
    hits = store.query(QuerySpec(classification_filters=(("construction_technique", "assembly without overlapping"),)))
    assert len(hits) == 2
    with pytest.raises(EmptyQuery):
        store.query(QuerySpec())


def test_hard_filters_never_leak():
    rng = random.Random(2)
    s = RegistryStore()
    for i in range(30):
        s.publish(modelgen.random_descriptor(rng, name=f"S{i}"))
    for key in ("interactivity", "formalism", "level"):
        for value in ("manual", "technical", "operational", "assisted"):
            try:
                res = s.query(QuerySpec("add model", classification_filters=((key, value),)))
            except DomainViolation:
                continue
            assert all(r.descriptor.classification.matches(key, value) for r, _ in res)
            assert all(0.0 <= sc <= 1.0 for _, sc in res)


def test_query_wire_round_trip():
    q = QuerySpec("objectify relationship", ("object oriented",), ("association",),
                  scenario.load_descriptor("objectify").semantic.product_in,
                  (("recursion", "true"),))
    assert parse_query(xmlio.write(query_to_element(q))) == q


# journal

def test_journal_replay_equals_memory(tmp_path):
    journal = tmp_path / "j.log"
    s = RegistryStore(journal, clock=ticking())
    ids = [s.publish(dataclasses.replace(OBJECTIFY, version=f"1.{i}"), "p") for i in range(5)]
    s.remove(ids[1])
    s.remove(ids[3])
    again = RegistryStore(journal)
    assert [serialize_record(r) for r in again.all_records()] == [serialize_record(r) for r in s.all_records()]
    lines = journal.read_text().splitlines()
    assert [line[:2] for line in lines] == ["P "] * 5 + ["R "] * 2
    assert all("\n" not in line for line in lines)


def test_torn_final_line_dropped(tmp_path):
    journal = tmp_path / "j.log"
    s = RegistryStore(journal)
    s.publish(OBJECTIFY)
    with open(journal, "ab") as f:
        f.write(b"P <moa:Record id=\"svc-000002\" publ")
    again = RegistryStore(journal)
    assert [r.service_id for r in again.all_records()] == ["svc-000001"]
    assert journal.read_bytes().endswith(b"\n")
    assert again.publish(RENAME) == "svc-000002"
    assert len(RegistryStore(journal).all_records()) == 2


@pytest.mark.parametrize("bad_line", [b"X nonsense", b"P <moa:Record", b"R svc-000099", b"\xff\xfe"])
def test_corrupt_line_reports_line_number(tmp_path, bad_line):
    journal = tmp_path / "j.log"
    s = RegistryStore(journal)
    s.publish(OBJECTIFY)
    with open(journal, "ab") as f:
        f.write(bad_line + b"\n")
    with pytest.raises(CorruptJournal) as info:
        RegistryStore(journal)
    assert info.value.line_no == 2


# HTTP

@pytest.fixture
def live():
    with serving(make_server(RegistryStore(clock=ticking()))) as server:
        yield server, RegistryClient(server.url)


def test_http_publish_status_codes(live):
    server, client = live
    body = serialize_descriptor(OBJECTIFY)
    status, text = transport.request("POST", server.url + "/services?provider=acme", body)
    assert status == 201 and xmlio.parse(text).tag == "moa:Published"
    sid = xmlio.parse(text).get("id")
    assert transport.request("POST", server.url + "/services", body)[0] == 409
    status, text = transport.request("POST", server.url + "/services", "<moa:MethodService/>")
    assert status == 422 and xmlio.parse(text).get("code") == "InvalidDescriptor"
    assert transport.request("GET", server.url + "/services/" + sid)[0] == 200
    assert transport.request("GET", server.url + "/services/svc-999999")[0] == 404
    assert transport.request("DELETE", server.url + "/services/" + sid)[0] == 204
    assert transport.request("DELETE", server.url + "/services/" + sid)[0] == 404
    assert transport.request("GET", server.url + "/nowhere")[0] == 404


def test_client_mirrors_store(live):
    _, client = live
    sid = client.publish(serialize_descriptor(OBJECTIFY), "acme")
    client.publish(RENAME)
    assert client.lookup(sid).descriptor == OBJECTIFY
    assert client.lookup(sid).provider_label == "acme"
    assert [r.descriptor.service_name for r in client.all_records()] == ["Objectify", "RenameClass"]
    assert client.resolve("RenameClass@1.0").descriptor == RENAME
    with pytest.raises(DuplicateService):
        client.publish(OBJECTIFY)
    results = client.query(QuerySpec("objectify relationship"))
    assert results[0][0].service_id == sid and results[0][1] == 1.0
    assert client.query(QuerySpec(classification_filters=(("construction_technique", "agile"),))) == []
    with pytest.raises(EmptyQuery):
        client.query(QuerySpec())
    client.remove(sid)
    with pytest.raises(NotFound):
        client.lookup(sid)


def test_concurrent_publishes_are_serialized(tmp_path):
    journal = tmp_path / "j.log"
    with serving(make_server(RegistryStore(journal))) as server:
        client = RegistryClient(server.url)
        ids, errors = [], []

        def worker(k):
            try:
                ids.append(client.publish(dataclasses.replace(OBJECTIFY, version=f"3.{k}")))
            except Exception as exc:  # pragma: no cover - reported below
                errors.append(exc)
        threads = [threading.Thread(target=worker, args=(k,)) for k in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert not errors
    assert sorted(ids) == [f"svc-{i:06d}" for i in range(1, 17)]
    assert len(RegistryStore(journal).all_records()) == 16


def test_intention_with_qualifiers_survives_wire(live):
    _, client = live
    d = dataclasses.replace(OBJECTIFY, semantic=dataclasses.replace(
        OBJECTIFY.semantic, intention=normalize_intention("Objectify the relationship carefully")))
    sid = client.publish(d)
    assert client.lookup(sid).descriptor.semantic.intention.qualifiers == ("carefully",)


# process-level durability

def spawn_registry(journal, port=0):
    return spawn("registry", "serve", "--journal", journal, "--port", port)


def test_kill_and_restart_preserves_records(tmp_path):
    journal = tmp_path / "registry.journal"
    proc, url = spawn_registry(journal)
    try:
        client = RegistryClient(url)
        scripted_operations(client, 20)
        before = [serialize_record(r) for r in client.all_records()]
    finally:
        proc.send_signal(signal.SIGKILL)
        proc.wait()
    proc, url = spawn_registry(journal)
    try:
        after = [serialize_record(r) for r in RegistryClient(url).all_records()]
    finally:
        proc.terminate()
        proc.wait()
    assert after == before and before


def test_corrupt_journal_refuses_to_start(tmp_path):
    journal = tmp_path / "bad.journal"
    journal.write_text("P <moa:Record/>\n")
    proc = subprocess.run([sys.executable, "-m", "moa", "registry", "serve", "--journal", str(journal),
                           "--port", "0"], capture_output=True, text=True, timeout=20)
    assert proc.returncode == 1
    assert "line 1" in proc.stderr


def test_port_busy(tmp_path):
    with serving(make_server(RegistryStore())) as server:
        port = server.server_address[1]
        proc = subprocess.run([sys.executable, "-m", "moa", "registry", "serve", "--port", str(port)],
                              capture_output=True, text=True, timeout=20)
    assert proc.returncode == 2 and "PortBusy" in proc.stderr


def test_graceful_stop_on_sigterm(tmp_path):
    proc, url = spawn_registry(tmp_path / "j.log")
    proc.terminate()
    assert proc.wait(timeout=10) == 0
    assert not os.path.exists(tmp_path / "j.log")
