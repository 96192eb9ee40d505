import contextlib
import random
import socket
import subprocess
import sys

import modelgen
import pytest

from moa import scenario
from moa.registry import RegistryStore, make_server
from moa.services import make_provider

ACCEPTANCE = []  # PASS/FAIL lines from test_acceptance, repeated in the summary


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda x: int(x.split()[2])):
            terminalreporter.write_line(line)


@contextlib.contextmanager
def serving(server):
    server.start_background()
    try:
        yield server
    finally:
        server.stop()


@contextlib.contextmanager
def live_services(names=("objectify", "rename_class", "identity"), journal=None):
    """An in-process registry plus one provider per built-in descriptor.

    Descriptors are re-advertised at the providers' ephemeral ports; yields
    ``(registry_url, {name: descriptor bytes})``, nothing published yet.
    """
    with contextlib.ExitStack() as stack:
        reg = stack.enter_context(serving(make_server(RegistryStore(journal))))
        published = {}
        for name in names:
            raw = scenario.fixture_path("descriptors", f"{name}.msd.xml").read_bytes()
            # bind first to learn the port, then serve the re-advertised bytes
            probe = make_provider(raw)
            port = probe.server_address[1]
            probe.server_close()
            bound = scenario.with_endpoint(raw, f"http://127.0.0.1:{port}/invoke")
            stack.enter_context(serving(make_provider(bound, port=port)))
            published[name] = bound
        yield reg.url, published


@pytest.fixture
def services():
    with live_services() as env:
        yield env


@pytest.fixture
def store():
    return RegistryStore()


def spawn(*argv):
    """Start ``python -m moa ARGV`` and wait for its ``serving URL`` line; returns ``(proc, url)``."""
    proc = subprocess.Popen([sys.executable, "-m", "moa", *map(str, argv)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    if not line.startswith("serving "):
        proc.kill()
        raise RuntimeError(f"{argv[:2]} did not start: {line!r} {proc.stderr.read()}")
    return proc, line.split()[1]


def stop(proc):
    proc.terminate()
    return proc.wait(timeout=10)


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def scripted_operations(client, n=50, seed=4):
    """``n`` publish/remove calls, removals drawn from the live set."""
    rng = random.Random(seed)
    live = []
    for k in range(n):
        if live and rng.random() < 0.35:
            client.remove(live.pop(rng.randrange(len(live))))
        else:
            live.append(client.publish(modelgen.random_descriptor(rng, name=f"Svc{k}"), f"p{k % 3}"))
