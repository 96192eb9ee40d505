"""Small XML layer used by every document format in the package.

Documents use a literal ``moa:`` prefix and are read without namespace
processing, so ``<moa:Model name="Empty"/>`` parses on its own. A root may
still declare ``xmlns:moa``; callers check it against the expected URI.

The writer is deterministic: attributes in insertion order, two-space
indentation, LF line endings, no mixed content.
"""

import xml.etree.ElementTree as ET
from xml.parsers import expat

from .errors import MalformedXml, SchemaViolation

DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>'
NS_ATTR = "xmlns:moa"


def parse(text) -> ET.Element:
    """Parse ``text`` (str or bytes) into an Element tree; tags keep their prefix."""
    if isinstance(text, str):
        data = text.encode("utf-8")
    elif isinstance(text, (bytes, bytearray)):
        data = bytes(text)
    else:
        raise MalformedXml(f"expected text, got {type(text).__name__}")

    builder = ET.TreeBuilder()
    parser = expat.ParserCreate("UTF-8")

    def refuse(*_args):
        raise MalformedXml("DTDs and entity declarations are not accepted")

    parser.StartDoctypeDeclHandler = refuse
    parser.EntityDeclHandler = refuse
    parser.StartElementHandler = lambda tag, attrs: builder.start(tag, attrs)
    parser.EndElementHandler = builder.end
    parser.CharacterDataHandler = builder.data
    parser.ordered_attributes = False
    try:
        parser.Parse(data, True)
        root = builder.close()
    except expat.ExpatError as exc:
        raise MalformedXml(str(exc)) from None
    except AssertionError:
        raise MalformedXml("no root element") from None
    return root


def _escape_text(s: str, compact: bool) -> str:
    s = s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace("\r", "&#13;")
    if compact:
        s = s.replace("\n", "&#10;")
    return s


def _escape_attr(s: str) -> str:
    return (s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;").replace("\n", "&#10;").replace("\r", "&#13;")
            .replace("\t", "&#9;"))


def _open_tag(elem: ET.Element) -> str:
    attrs = "".join(f' {k}="{_escape_attr(str(v))}"' for k, v in elem.attrib.items())
    return f"<{elem.tag}{attrs}"


def _write(elem, out, depth, pretty):
    pad = "  " * depth if pretty else ""
    nl = "\n" if pretty else ""
    children = list(elem)
    text = elem.text or ""
    if children and text.strip():
        raise ValueError(f"mixed content not supported in <{elem.tag}>")
    if children:
        out.append(f"{pad}{_open_tag(elem)}>{nl}")
        for child in children:
            _write(child, out, depth + 1, pretty)
        out.append(f"{pad}</{elem.tag}>{nl}")
    elif text:
        out.append(f"{pad}{_open_tag(elem)}>{_escape_text(text, not pretty)}</{elem.tag}>{nl}")
    else:
        out.append(f"{pad}{_open_tag(elem)}/>{nl}")


def write(elem: ET.Element, *, pretty: bool = True, declaration: bool = True) -> str:
    """Serialize; ``pretty=False`` yields a single line with newlines escaped."""
    out = []
    if declaration:
        out.append(DECLARATION + ("\n" if pretty else ""))
    _write(elem, out, 0, pretty)
    return "".join(out)


def element(tag: str, attrib=None, text: str | None = None, children=()) -> ET.Element:
    e = ET.Element(tag)
    for k, v in (attrib or {}).items():
        if v is not None:
            e.set(k, v)
    if text:
        e.text = text
    for c in children:
        e.append(c)
    return e


# reading helpers

def expect_tag(elem: ET.Element, tag: str, path: str = ""):
    if elem.tag != tag:
        raise SchemaViolation(f"{path or '/'}: expected <{tag}>, found <{elem.tag}>")


def check_attrs(elem: ET.Element, path: str, required=(), optional=(), namespace: str | None = None):
    """Reject unknown or missing attributes; returns the attribute dict."""
    attrs = dict(elem.attrib)
    ns = attrs.pop(NS_ATTR, None)
    if ns is not None and ns != namespace:
        raise SchemaViolation(f"{path}: unexpected namespace {ns!r}")
    for name in required:
        if name not in attrs:
            raise SchemaViolation(f"{path}: missing attribute {name!r}")
    unknown = set(attrs) - set(required) - set(optional)
    if unknown:
        raise SchemaViolation(f"{path}: unknown attribute(s) {', '.join(sorted(unknown))}")
    return attrs


def no_text(elem: ET.Element, path: str):
    if elem.text and elem.text.strip():
        raise SchemaViolation(f"{path}: unexpected text content")
    for child in elem:
        if child.tail and child.tail.strip():
            raise SchemaViolation(f"{path}: unexpected text content")


def leaf_text(elem: ET.Element, path: str) -> str:
    if len(elem):
        raise SchemaViolation(f"{path}: <{elem.tag}> takes text only")
    return elem.text or ""
