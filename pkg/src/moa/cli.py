"""The ``moa`` command: registry and provider hosts, publishing, search and process runs.

Exit status: 0 success, 1 validation or application error, 2 transport
error, 3 merge conflict. Results go to stdout, diagnostics to stderr.
"""

import argparse
import logging
import os
import signal
import sys
import urllib.parse
from pathlib import Path

from . import scenario
from .composition import HttpInvoker, execute, parse_process, validate_process
from .descriptor import parse_descriptor, signature_of
from .errors import InvocationFailure, MergeConflict, MoaError, TransportError
from .model import parse_model, serialize_model
from .registry import RegistryClient, RegistryStore, make_server
from .retrieval import QuerySpec, SynonymTable
from .services import check_implementation, make_provider

EXIT_OK, EXIT_ERROR, EXIT_TRANSPORT, EXIT_CONFLICT = 0, 1, 2, 3
DEFAULT_REGISTRY_PORT = 8700

logger = logging.getLogger("moa")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with usage errors raised instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _registry_url(args) -> str:
    url = getattr(args, "registry", None) or os.environ.get("MOA_REGISTRY")
    if not url:
        raise UsageError("no registry: pass --registry URL or set MOA_REGISTRY")
    return url


def _synonyms(args) -> SynonymTable:
    path = args.synonyms or os.environ.get("MOA_SYNONYMS")
    return SynonymTable.load(path) if path else SynonymTable.default()


def _serve(server):
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    print(f"serving {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _bind(factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except OSError as exc:
        raise TransportError(f"PortBusy: {exc.strerror or exc}") from None


def cmd_registry_serve(args):
    store = RegistryStore(args.journal, synonyms=_synonyms(args))
    logger.info("registry holds %d records", len(store.all_records()))
    return _serve(_bind(make_server, store, args.host, args.port))


def cmd_provider_serve(args):
    raw = Path(args.descriptor).read_bytes()
    descriptor = parse_descriptor(raw)
    check_implementation(descriptor)
    port = args.port
    if port is None:
        port = urllib.parse.urlsplit(descriptor.operational.endpoint).port or 0
    return _serve(_bind(make_provider, raw, args.host, port))


def cmd_publish(args):
    text = Path(args.descriptor).read_text(encoding="utf-8")
    parse_descriptor(text)
    print(RegistryClient(_registry_url(args)).publish(text, args.provider or ""))
    return EXIT_OK


def _filters(pairs):
    out = []
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--where expects ATTR=VALUE, got {item!r}")
        out.append((key.strip(), value.strip()))
    return tuple(out)


def cmd_search(args):
    shape = signature_of(parse_model(Path(args.shape).read_bytes())) if args.shape else None
    q = QuerySpec(intention_text=args.intention or None,
                  paradigm_keywords=tuple(args.paradigm), process_keywords=tuple(args.process),
                  product_shape=shape, classification_filters=_filters(args.where))
    if q.is_empty():
        raise UsageError("search needs an intention, --paradigm, --process, --shape or --where")
    for record, score in RegistryClient(_registry_url(args)).query(q):
        print(f"{record.service_id}\t{record.descriptor.ref}\t{score:.3f}")
    return EXIT_OK


def cmd_describe(args):
    r = RegistryClient(_registry_url(args)).resolve(args.service)
    d = r.descriptor
    sem = d.semantic
    print(f"id\t{r.service_id}")
    print(f"service\t{d.ref}")
    print(f"provider\t{r.provider_label}")
    print(f"published_at\t{r.published_at}")
    print(f"intention\t{sem.intention.raw_text}")
    print(f"paradigm\t{sem.paradigm}")
    for step in sem.process_description:
        print(f"step\t{step}")
    print(f"product_in\t{', '.join(map(str, sem.product_in.constraints))}")
    print(f"product_out\t{', '.join(map(str, sem.product_out.constraints))}")
    print(f"endpoint\t{d.operational.endpoint}")
    for op in d.operational.operations:
        print(f"operation\t{op.name}({', '.join(op.params)})")
    for key, values in d.classification.values:
        print(f"classification\t{key}\t{', '.join(values)}")
    return EXIT_OK


def _report_lines(report):
    return [f"{v.path}\t{v.rule}\t{v.message}" for v in report.violations]


def cmd_process_validate(args):
    process = parse_process(Path(args.process).read_bytes())
    doc = parse_model(Path(args.input).read_bytes()) if args.input else None
    report = validate_process(process, RegistryClient(_registry_url(args)), doc)
    for line in _report_lines(report):
        print(line)
    for path in report.overlap_checks:
        print(f"{path}\tOverlapCheckAtRuntime\t")
    return EXIT_OK if report.ok else EXIT_ERROR


def cmd_process_run(args):
    process = parse_process(Path(args.process).read_bytes())
    doc = parse_model(Path(args.input).read_bytes())
    client = RegistryClient(_registry_url(args))
    report = validate_process(process, client, doc)
    if not report.ok:
        for line in _report_lines(report):
            print(line, file=sys.stderr)
        return EXIT_ERROR
    out, trace = execute(process, doc, HttpInvoker(), client)
    Path(args.output).write_text(serialize_model(out), encoding="utf-8")
    for entry in trace.entries:
        print(entry.line())
    return EXIT_OK


def cmd_tutorial(args):
    paths = args.descriptor or [scenario.fixture_path("descriptors", n)
                                for n in ("objectify.msd.xml", "rename_class.msd.xml")]
    transcript = scenario.run_tutorial(_registry_url(args), [Path(p).read_bytes() for p in paths],
                                       args.model, args.process, args.output)
    sys.stdout.write(transcript.text())
    return EXIT_OK


def build_parser() -> Parser:
    common = Parser(add_help=False)
    # SUPPRESS keeps a subcommand from resetting a value given before it
    common.add_argument("--registry", default=argparse.SUPPRESS,
                        help="registry base URL (default: $MOA_REGISTRY)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log to stderr")

    p = Parser(prog="moa", description="Method services: registry, providers and processes.",
               parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    reg = sub.add_parser("registry", help="registry host").add_subparsers(dest="action", required=True,
                                                                           parser_class=Parser)
    rs = reg.add_parser("serve", parents=[common], help="serve the registry API")
    rs.add_argument("--journal", help="append-only journal file (omit for in-memory)")
    rs.add_argument("--port", type=int, default=DEFAULT_REGISTRY_PORT)
    rs.add_argument("--host", default="127.0.0.1")
    rs.add_argument("--synonyms", help="synonym table (default: $MOA_SYNONYMS or built-in)")
    rs.set_defaults(func=cmd_registry_serve)

    prov = sub.add_parser("provider", help="service host").add_subparsers(dest="action", required=True,
                                                                          parser_class=Parser)
    ps = prov.add_parser("serve", parents=[common], help="serve one descriptor's built-in operations")
    ps.add_argument("descriptor")
    ps.add_argument("--port", type=int, help="default: the port named by the descriptor's endpoint")
    ps.add_argument("--host", default="127.0.0.1")
    ps.set_defaults(func=cmd_provider_serve)

    pub = sub.add_parser("publish", parents=[common], help="publish a descriptor, print its id")
    pub.add_argument("descriptor")
    pub.add_argument("--provider", help="provider label stored with the record")
    pub.set_defaults(func=cmd_publish)

    se = sub.add_parser("search", parents=[common], help="ranked retrieval: id, Name@Version, score")
    se.add_argument("intention", nargs="?")
    se.add_argument("--paradigm", action="append", default=[], metavar="KEYWORD")
    se.add_argument("--process", action="append", default=[], metavar="KEYWORD")
    se.add_argument("--shape", metavar="MODEL", help="only services accepting this model")
    se.add_argument("--where", action="append", default=[], metavar="ATTR=VALUE")
    se.set_defaults(func=cmd_search)

    de = sub.add_parser("describe", parents=[common], help="show one record")
    de.add_argument("service", help="service id, Name@Version or Name")
    de.set_defaults(func=cmd_describe)

    proc = sub.add_parser("process", help="method processes").add_subparsers(dest="action", required=True,
                                                                             parser_class=Parser)
    pv = proc.add_parser("validate", parents=[common], help="static checks against the registry")
    pv.add_argument("process")
    pv.add_argument("--input", metavar="MODEL", help="check shapes against this input model")
    pv.set_defaults(func=cmd_process_validate)
    pr = proc.add_parser("run", parents=[common], help="execute, write the output model, print the trace")
    pr.add_argument("process")
    pr.add_argument("input")
    pr.add_argument("output")
    pr.set_defaults(func=cmd_process_run)

    tu = sub.add_parser("tutorial", parents=[common], help="publish, search, describe and run Objectify")
    tu.add_argument("--descriptor", action="append", metavar="PATH",
                    help="descriptor to publish first (default: built-in Objectify and RenameClass)")
    tu.add_argument("--model", help="input model (default: the Person/Company sample)")
    tu.add_argument("--process", help="process file (default: single objectify step)")
    tu.add_argument("--output", help="write the output model here")
    tu.set_defaults(func=cmd_tutorial)
    return p


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, MergeConflict):
        return EXIT_CONFLICT
    if isinstance(exc, TransportError):
        return EXIT_TRANSPORT
    if isinstance(exc, InvocationFailure) and isinstance(exc.cause, TransportError):
        return EXIT_TRANSPORT
    return EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"moa: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except MoaError as exc:
        print(f"moa: {exc}", file=sys.stderr)
        if isinstance(exc, MergeConflict):
            for ident in exc.identifiers:
                print(ident, file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"moa: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
