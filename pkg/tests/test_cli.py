import subprocess
import sys

import pytest
from conftest import live_services

from moa import scenario
from moa.cli import main
from moa.model import parse_model
from moa.services import STAGES


@pytest.fixture
def cli(tmp_path, capsys):
    """Registry plus providers, descriptors written to disk; ``call(*argv) -> (code, out, err)``."""
    with live_services() as (url, raw):
        paths = {}
        for name, body in raw.items():
            paths[name] = tmp_path / f"{name}.msd.xml"
            paths[name].write_bytes(body)

        def call(*argv):
            code = main(["--registry", url, *argv]) if argv and argv[0] != "-" else main(list(argv[1:]))
            out, err = capsys.readouterr()
            return code, out, err
        call.paths = paths
        call.url = url
        yield call


def publish_all(cli):
    return {name: cli("publish", str(path))[1].strip() for name, path in cli.paths.items()}


def test_publish_prints_ids(cli):
    ids = publish_all(cli)
    assert sorted(ids.values()) == ["svc-000001", "svc-000002", "svc-000003"]
    code, _, err = cli("publish", str(cli.paths["objectify"]))
    assert code == 1 and "DuplicateService" in err


def test_registry_option_after_subcommand(cli):
    code, out, _ = cli("-", "publish", str(cli.paths["objectify"]), "--registry", cli.url, "--provider", "acme")
    assert code == 0 and out.strip() == "svc-000001"
    code, out, _ = cli("describe", "Objectify")
    assert "acme" in out


def test_search_table(cli):
    publish_all(cli)
    code, out, _ = cli("search", "objectify relationship")
    assert code == 0
    rows = [line.split("\t") for line in out.strip().splitlines()]
    assert rows[0][1:] == ["Objectify@1.0", "1.000"]
    assert len(rows) == 3 and all(len(r) == 3 for r in rows)
    scores = [float(r[2]) for r in rows]
    assert scores == sorted(scores, reverse=True)


def test_search_filters_and_shape(cli):
    publish_all(cli)
    code, out, _ = cli("search", "--where", "construction_technique=agile")
    assert code == 0 and out == ""
    code, out, _ = cli("search", "objectify relationship", "--shape",
                       str(scenario.fixture_path("models", "empty.ximodel")))
    objectify_row = [r for r in out.splitlines() if "Objectify@1.0" in r][0]
    assert objectify_row.endswith("0.000")


@pytest.mark.parametrize("argv", [("search",), ("search", "--where", "nonsense"),
                                  ("search", "--where", "interactivity=telepathic")])
def test_search_usage_errors(cli, argv):
    assert cli(*argv)[0] == 1


def test_describe(cli):
    ids = publish_all(cli)
    code, out, _ = cli("describe", ids["objectify"])
    assert code == 0 and "Objectify" in out
    assert cli("describe", "Objectify@1.0")[1] == out
    code, _, err = cli("describe", "svc-999999")
    assert code == 1 and "NotFound" in err


def test_process_validate(cli):
    publish_all(cli)
    path = scenario.fixture_path("processes", "objectify_then_rename.mproc.xml")
    code, out, _ = cli("process", "validate", str(path), "--input",
                       str(scenario.fixture_path("models", "person_company.ximodel")))
    assert code == 0 and out == ""
    code, out, _ = cli("process", "validate", str(scenario.fixture_path("processes", "parallel_renames.mproc.xml")))
    assert code == 0 and out.strip() == "0\tOverlapCheckAtRuntime"
    code, out, _ = cli("process", "validate", str(path), "--input",
                       str(scenario.fixture_path("models", "empty.ximodel")))
    assert code == 1 and "ShapeIncompatibility" in out


def test_process_run_writes_output(cli, tmp_path):
    publish_all(cli)
    out_path = tmp_path / "out.ximodel"
    code, out, _ = cli("process", "run", str(scenario.fixture_path("processes", "objectify_worksfor.mproc.xml")),
                       str(scenario.fixture_path("models", "person_company.ximodel")), str(out_path))
    assert code == 0
    assert out_path.read_text() == scenario.golden_path("person_company.objectified").read_text()
    (line,) = out.strip().splitlines()
    assert line.split("\t")[-1] == ",".join(STAGES)


def test_merge_conflict_exit_3(cli, tmp_path):
    publish_all(cli)
    code, _, err = cli("process", "run", str(scenario.fixture_path("processes", "conflicting_renames.mproc.xml")),
                       str(scenario.fixture_path("models", "person_company.ximodel")), str(tmp_path / "o.ximodel"))
    assert code == 3
    assert "Person" in err.splitlines() and "WorksFor[a]" in err.splitlines()
    assert not (tmp_path / "o.ximodel").exists()


def test_unresolved_process_exit_1(cli, tmp_path):
    code, _, err = cli("process", "run", str(scenario.fixture_path("processes", "objectify_worksfor.mproc.xml")),
                       str(scenario.fixture_path("models", "person_company.ximodel")), str(tmp_path / "o.ximodel"))
    assert code == 1 and "UnresolvedService" in err


def test_tutorial(cli, tmp_path):
    out_path = tmp_path / "t.ximodel"
    code, out, _ = cli("tutorial", "--descriptor", str(cli.paths["objectify"]),
                       "--descriptor", str(cli.paths["rename_class"]), "--output", str(out_path))
    assert code == 0, out
    assert out_path.read_text() == scenario.golden_path("person_company.objectified").read_text()
    assert "1.000" in out


def test_transport_failure_exit_2(tmp_path, capsys):
    import socket
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    code = main(["search", "objectify relationship", "--registry", f"http://127.0.0.1:{port}"])
    assert code == 2


def test_missing_registry_is_usage_error(monkeypatch, capsys):
    monkeypatch.delenv("MOA_REGISTRY", raising=False)
    assert main(["search", "objectify relationship"]) == 1
    assert main(["frobnicate"]) == 1


def test_registry_from_environment(cli, monkeypatch):
    monkeypatch.setenv("MOA_REGISTRY", cli.url)
    assert cli("-", "publish", str(cli.paths["identity"]))[0] == 0


def test_module_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "moa", "--help"], capture_output=True, text=True, timeout=20)
    assert proc.returncode == 0 and "tutorial" in proc.stdout


def test_output_parses(cli, tmp_path):
    publish_all(cli)
    out_path = tmp_path / "p.ximodel"
    code, _, _ = cli("process", "run", str(scenario.fixture_path("processes", "parallel_renames.mproc.xml")),
                     str(scenario.fixture_path("models", "person_company.ximodel")), str(out_path))
    assert code == 0
    assert [c.name for c in parse_model(out_path.read_text()).classes] == ["Human", "Firm"]
