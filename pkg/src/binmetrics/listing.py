"""Normalized disassembly listings: model, classification, load and dump.

Two on-disk encodings are accepted under the same format version. The
text form looks like::

    format 1
    module demo @0x400000
    routine f1 @0x1000
    0x1000: push ebp
    0x1001: mov ebp, esp
    0x1007: jz 0x100e          ; links=0x100e,0x1009

and the JSON form carries the same records with explicit ``operands``,
``classes`` and ``links`` fields.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import x86
from .exceptions import ListingInvariantError, ListingParseError

logger = logging.getLogger(__name__)

SUPPORTED_VERSIONS = (1,)

REGISTER = "register"
IMMEDIATE = "immediate"
MEMORY = "memory"
CODE_TARGET = "code-target"
OPERAND_KINDS = (REGISTER, IMMEDIATE, MEMORY, CODE_TARGET)


@dataclass(frozen=True)
class Operand:
    kind: str
    token: str
    value: Optional[int] = None

    def __post_init__(self):
        if self.kind not in OPERAND_KINDS:
            raise ValueError(f"unknown operand kind {self.kind!r}")
        if not self.token or self.token != self.token.lower() or re.search(r"\s", self.token):
            raise ValueError(f"operand token {self.token!r} is not canonical")


@dataclass(frozen=True)
class Instruction:
    address: int
    mnemonic: str
    operands: tuple = ()
    classes: frozenset = frozenset()
    links: tuple = ()

    def has(self, cls):
        return cls in self.classes

    @property
    def is_terminator(self):
        return not self.classes.isdisjoint(x86.TERMINATORS)


@dataclass(frozen=True)
class Routine:
    name: str
    entry: int
    instructions: tuple = ()
    callees: tuple = ()
    is_import: bool = False

    def __len__(self):
        return len(self.instructions)

    @property
    def end(self):
        return self.instructions[-1].address if self.instructions else self.entry


@dataclass(frozen=True)
class ProgramListing:
    module_name: str
    image_base: int = 0
    routines: tuple = ()
    format_version: int = 1
    _by_name: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {r.name: r for r in self.routines})

    def routine(self, name):
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"no routine named {name!r} in module {self.module_name!r}") from None

    def __contains__(self, name):
        return name in self._by_name

    @property
    def names(self):
        return [r.name for r in self.routines]


# ---------------------------------------------------------------------------
# operands

_SIZE_PREFIX = re.compile(
    r"^(?:(?:byte|word|dword|qword|fword|tbyte|xmmword)\s+ptr|short|near\s+ptr|far\s+ptr|large|small)\s+")
_SEGMENT = re.compile(r"^(cs|ds|es|fs|gs|ss):")
_IDA_HEX = re.compile(r"^-?[0-9][0-9a-f]*h$")
_NUMBER_ATOM = re.compile(r"(?<![\w])(0x[0-9a-f]+|[0-9][0-9a-f]*h|[0-9]+)(?![\w])")
_ADDRESS_LABEL = re.compile(r"^(?:loc|locret|sub|nullsub|j_sub|unk)_([0-9a-f]+)$")


def parse_number(text):
    """Parse ``12``, ``0x1f``, ``1Fh`` or ``-8``; return None if not numeric."""
    text = text.strip().lower()
    neg = text.startswith("-")
    body = text[1:] if neg else text
    try:
        if body.startswith("0x"):
            value = int(body, 16)
        elif _IDA_HEX.match(body):
            value = int(body[:-1], 16)
        elif body.isdigit():
            value = int(body, 10)
        else:
            return None
    except ValueError:
        return None
    return -value if neg else value


def format_number(value):
    if -10 < value < 10:
        return str(value)
    return f"-{-value:#x}" if value < 0 else f"{value:#x}"


def _canonical_memory(text):
    text = re.sub(r"\s+", "", text)
    if not text.startswith("["):
        # IDA style "off_x[eax*4]" -> "[off_x+eax*4]"
        head, _, rest = text.partition("[")
        text = "[" + head + "+" + rest
    inner = text[1:text.rindex("]")] if "]" in text else text[1:]
    inner = _NUMBER_ATOM.sub(lambda m: format_number(parse_number(m.group(1))), inner)
    return "[" + inner + "]"


def parse_operand(text, mnemonic=""):
    """Turn one operand's source text into a canonical Operand."""
    raw = text.strip().lower()
    if not raw:
        raise ValueError("empty operand")
    raw = _SIZE_PREFIX.sub("", raw)
    raw = _SIZE_PREFIX.sub("", raw)
    branchy = mnemonic in x86.COND_JUMPS or mnemonic in ("jmp", "call")

    segment = _SEGMENT.match(raw)
    if segment and "[" not in raw:
        rest = raw[segment.end():]
        if mnemonic == "call" and parse_number(rest) is None:
            return Operand(CODE_TARGET, rest)
        return Operand(MEMORY, _canonical_memory("[" + rest + "]"))
    if "[" in raw:
        if segment:
            raw = raw[segment.end():]
        return Operand(MEMORY, _canonical_memory(raw))
    if raw in x86.REGISTERS:
        return Operand(REGISTER, raw)
    if raw.startswith("offset "):
        return Operand(IMMEDIATE, "offset:" + re.sub(r"\s+", "", raw[7:]))
    value = parse_number(raw)
    if value is not None:
        if branchy:
            return Operand(CODE_TARGET, format_number(value), value)
        return Operand(IMMEDIATE, format_number(value), value)
    token = re.sub(r"\s+", "", raw)
    if branchy:
        label = _ADDRESS_LABEL.match(token)
        return Operand(CODE_TARGET, token, int(label.group(1), 16) if label else None)
    # a bare data symbol is an absolute memory reference
    return Operand(MEMORY, "[" + token + "]")


def split_operands(text):
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip() or parts:
        parts.append("".join(cur))
    parts = [p.strip() for p in parts]
    if any(not p for p in parts):
        raise ValueError(f"empty operand in {text.strip()!r}")
    return parts


# ---------------------------------------------------------------------------
# classification

def classify(mnemonic, operands=()):
    """Map a mnemonic and its operands to its semantic class set.

    Total: mnemonics outside the table land in ``{"other"}``.
    """
    m = mnemonic.lower()
    if m in x86.COND_JUMPS:
        return frozenset({x86.COND_BRANCH})
    if m == "jmp":
        if operands and operands[0].kind in (REGISTER, MEMORY):
            return frozenset({x86.INDIRECT_BRANCH})
        return frozenset({x86.UNCOND_BRANCH})
    if m == "call":
        return frozenset({x86.CALL})
    if m in x86.RETURNS:
        return frozenset({x86.RET})
    if m in x86.COMPARES:
        return frozenset({x86.COMPARE})
    if m in x86.ASSIGNMENTS:
        return frozenset({x86.ASSIGNMENT})
    return frozenset({x86.OTHER})


def default_links(mnemonic, operands, classes, next_address):
    """Control-flow successors implied by the instruction's class."""
    fall = () if next_address is None else (next_address,)
    if x86.COND_BRANCH in classes or x86.UNCOND_BRANCH in classes:
        target = operands[0].value if operands else None
        if target is None and x86.UNCOND_BRANCH in classes:
            # tail jump to an external symbol leaves the routine
            return ()
        if target is None:
            raise ValueError(f"{mnemonic} has no resolvable target address")
        if x86.COND_BRANCH in classes:
            return (target,) + (fall if fall else (None,))
        return (target,)
    if x86.INDIRECT_BRANCH in classes or x86.RET in classes:
        return ()
    return fall


# ---------------------------------------------------------------------------
# construction and validation

def _check_routine(routine):
    insns = routine.instructions
    if not insns:
        if not routine.is_import:
            raise ListingInvariantError("routine has no instructions", routine=routine.name)
        return
    if insns[0].address != routine.entry:
        raise ListingInvariantError(
            f"entry {routine.entry:#x} is not the first instruction address {insns[0].address:#x}",
            routine=routine.name)
    addresses = set()
    prev = None
    for insn in insns:
        if prev is not None and insn.address <= prev:
            kind = "duplicate address" if insn.address == prev else "addresses not ascending"
            raise ListingInvariantError(f"{kind} at {insn.address:#x}", routine=routine.name)
        prev = insn.address
        addresses.add(insn.address)
        if len(insn.classes & x86.BRANCH_FAMILY) > 1:
            raise ListingInvariantError(
                f"instruction at {insn.address:#x} carries several branch classes", routine=routine.name)
    for insn in insns:
        for link in insn.links:
            if link not in addresses:
                where = "past the routine end" if link is None else f"{link:#x}"
                raise ListingInvariantError(
                    f"dangling link from {insn.address:#x} to {where}", routine=routine.name)


def _resolve_callees(routines):
    by_entry = {r.entry: r.name for r in routines}
    by_lower = {}
    for r in routines:
        by_lower.setdefault(r.name.lower(), r.name)
    resolved = []
    for r in routines:
        callees = []
        for insn in r.instructions:
            if x86.CALL not in insn.classes or not insn.operands:
                continue
            op = insn.operands[0]
            if op.kind != CODE_TARGET:
                continue
            if op.value is not None and op.value in by_entry:
                name = by_entry[op.value]
            else:
                name = by_lower.get(op.token, op.token)
            if name not in callees:
                callees.append(name)
        resolved.append(tuple(callees))
    return resolved


def build_listing(module_name, routines, image_base=0, format_version=1, resolve_calls=True):
    """Validate routines and assemble a ProgramListing.

    Raises ListingInvariantError on any structural violation.
    """
    routines = list(routines)
    seen = set()
    for r in routines:
        if r.name in seen:
            raise ListingInvariantError("duplicate routine name", routine=r.name)
        seen.add(r.name)
        _check_routine(r)
    spans = sorted((r.entry, r.end, r.name) for r in routines if r.instructions)
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 <= e0:
            raise ListingInvariantError(f"address range overlaps routine {n0!r}", routine=n1)
    if resolve_calls:
        routines = [
            Routine(r.name, r.entry, r.instructions, callees, r.is_import) if not r.callees else r
            for r, callees in zip(routines, _resolve_callees(routines))
        ]
    return ProgramListing(module_name, image_base, tuple(routines), format_version)


def make_instructions(records, unknown=None):
    """Build Instruction objects from ``(address, mnemonic, operands, links, classes)`` tuples.

    ``operands`` may be Operand objects or raw strings; ``links`` and
    ``classes`` may be None to use the table defaults.
    """
    records = list(records)
    out = []
    for i, (address, mnemonic, operands, links, classes) in enumerate(records):
        mnemonic = mnemonic.lower()
        ops = tuple(op if isinstance(op, Operand) else parse_operand(op, mnemonic) for op in operands)
        if classes is None:
            classes = classify(mnemonic, ops)
            if unknown is not None and x86.OTHER in classes and not x86.is_known(mnemonic):
                unknown.add(mnemonic)
        classes = frozenset(classes)
        if links is None:
            nxt = records[i + 1][0] if i + 1 < len(records) else None
            links = default_links(mnemonic, ops, classes, nxt)
        out.append(Instruction(address, mnemonic, ops, classes, tuple(links)))
    return tuple(out)


def _report_unknown(unknown, source):
    for mnemonic in sorted(unknown):
        logger.warning("%s: unknown mnemonic %r classified as other", source, mnemonic)


# ---------------------------------------------------------------------------
# text format

_HEX = r"(?:0x[0-9a-fA-F]+|[0-9a-fA-F]+h)"
_INSN_RE = re.compile(r"^(" + _HEX + r"|[0-9a-fA-F]+)\s*:\s*([A-Za-z][\w.]*)\s*(.*)$")
_ROUTINE_RE = re.compile(r"^routine\s+(\S+)\s+@(" + _HEX + r")(\s+import)?$")
_MODULE_RE = re.compile(r"^module\s+(\S+)(?:\s+@(" + _HEX + r"))?$")


def _hex(text):
    value = parse_number(text if text.lower().startswith("0x") or text.lower().endswith("h") else "0x" + text)
    if value is None:
        raise ValueError(f"bad address {text!r}")
    return value


def _parse_annotations(comment, lineno, source):
    notes = {}
    for part in comment.split():
        if "=" not in part:
            continue
        key, _, val = part.partition("=")
        if key == "links":
            try:
                notes["links"] = tuple(_hex(v) for v in val.split(",") if v)
            except ValueError as exc:
                raise ListingParseError(str(exc), source=source, line=lineno) from None
        elif key == "classes":
            classes = frozenset(v for v in val.split(",") if v)
            bad = classes - set(x86.CLASSES)
            if bad:
                raise ListingParseError(f"unknown class {sorted(bad)[0]!r}", source=source, line=lineno)
            notes["classes"] = classes
    return notes


def loads_text(text, source="<string>"):
    version = None
    module = None
    image_base = 0
    routines = []
    current = None
    unknown = set()

    def close():
        if current is None:
            return
        name, entry, is_import, recs, first_line = current
        try:
            insns = make_instructions(recs, unknown)
        except ValueError as exc:
            raise ListingParseError(str(exc), source=source, line=first_line) from None
        routines.append(Routine(name, entry, insns, (), is_import))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        body, _, comment = line.partition(";")
        body = body.strip()
        if version is None:
            m = re.match(r"^format\s+(\d+)$", body)
            if not m:
                raise ListingParseError("missing 'format <version>' header", source=source, line=lineno)
            version = int(m.group(1))
            if version not in SUPPORTED_VERSIONS:
                raise ListingParseError(f"unsupported format version {version}", source=source, line=lineno)
            continue
        m = _MODULE_RE.match(body)
        if m:
            if module is not None:
                raise ListingParseError("second module header", source=source, line=lineno)
            module = m.group(1)
            image_base = _hex(m.group(2)) if m.group(2) else 0
            continue
        m = _ROUTINE_RE.match(body)
        if m:
            close()
            current = (m.group(1), _hex(m.group(2)), bool(m.group(3)), [], lineno)
            continue
        m = _INSN_RE.match(body)
        if m:
            if current is None:
                raise ListingParseError("instruction outside a routine", source=source, line=lineno)
            try:
                address = _hex(m.group(1))
                ops = split_operands(m.group(3))
                ops = [parse_operand(o, m.group(2).lower()) for o in ops]
            except ValueError as exc:
                raise ListingParseError(str(exc), source=source, line=lineno) from None
            notes = _parse_annotations(comment, lineno, source)
            current[3].append((address, m.group(2), ops, notes.get("links"), notes.get("classes")))
            continue
        raise ListingParseError(f"unrecognized record {body!r}", source=source, line=lineno)

    if version is None:
        raise ListingParseError("missing 'format <version>' header", source=source, line=1)
    close()
    _report_unknown(unknown, source)
    return build_listing(module or os.path.splitext(os.path.basename(source))[0],
                         routines, image_base, version)


def dumps_text(listing):
    lines = [f"format {listing.format_version}",
             f"module {listing.module_name} @{listing.image_base:#x}"]
    for r in listing.routines:
        lines.append(f"routine {r.name} @{r.entry:#x}" + (" import" if r.is_import else ""))
        insns = r.instructions
        for i, insn in enumerate(insns):
            ops = ", ".join(_render_operand(op) for op in insn.operands)
            line = f"{insn.address:#x}: {insn.mnemonic}" + (f" {ops}" if ops else "")
            notes = []
            if insn.classes != classify(insn.mnemonic, insn.operands):
                notes.append("classes=" + ",".join(sorted(insn.classes)))
            nxt = insns[i + 1].address if i + 1 < len(insns) else None
            try:
                implied = default_links(insn.mnemonic, insn.operands, insn.classes, nxt)
            except ValueError:
                implied = None
            if insn.links != implied:
                notes.append("links=" + ",".join(f"{a:#x}" for a in insn.links))
            if notes:
                line += " ; " + " ".join(notes)
            lines.append(line)
    return "\n".join(lines) + "\n"


def _render_operand(op):
    if op.kind == CODE_TARGET and op.value is not None and op.token == format_number(op.value):
        return f"{op.value:#x}"
    if op.kind == IMMEDIATE and op.token.startswith("offset:"):
        return "offset " + op.token[7:]
    return op.token


# ---------------------------------------------------------------------------
# JSON format

def loads_json(text, source="<string>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ListingParseError(exc.msg, source=source, line=exc.lineno) from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ListingParseError("missing format_version", source=source, line=1)
    version = doc["format_version"]
    if version not in SUPPORTED_VERSIONS:
        raise ListingParseError(f"unsupported format version {version}", source=source, line=1)
    unknown = set()
    routines = []
    for ri, rdoc in enumerate(doc.get("routines", [])):
        where = f"routines[{ri}]"
        try:
            recs = []
            for idoc in rdoc.get("instructions", []):
                ops = []
                for o in idoc.get("operands", []):
                    if isinstance(o, str):
                        ops.append(parse_operand(o, idoc["mnemonic"].lower()))
                    else:
                        ops.append(Operand(o["kind"], o["token"], o.get("value")))
                recs.append((_as_int(idoc["address"]), idoc["mnemonic"], ops,
                             [_as_int(a) for a in idoc["links"]] if "links" in idoc else None,
                             idoc.get("classes")))
            insns = make_instructions(recs, unknown)
            routines.append(Routine(rdoc["name"], _as_int(rdoc["entry"]), insns,
                                    tuple(rdoc.get("callees", ())), bool(rdoc.get("is_import", False))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ListingParseError(f"{where}: {exc}", source=source) from None
    _report_unknown(unknown, source)
    return build_listing(doc.get("module", "module"), routines,
                         _as_int(doc.get("image_base", 0)), version)


def _as_int(v):
    if isinstance(v, int):
        return v
    value = parse_number(str(v))
    if value is None:
        raise ValueError(f"bad integer {v!r}")
    return value


def to_dict(listing):
    return {
        "format_version": listing.format_version,
        "module": listing.module_name,
        "image_base": listing.image_base,
        "routines": [
            {
                "name": r.name,
                "entry": r.entry,
                "is_import": r.is_import,
                "callees": list(r.callees),
                "instructions": [
                    {
                        "address": i.address,
                        "mnemonic": i.mnemonic,
                        "operands": [
                            {"kind": o.kind, "token": o.token, "value": o.value} for o in i.operands
                        ],
                        "classes": sorted(i.classes),
                        "links": list(i.links),
                    }
                    for i in r.instructions
                ],
            }
            for r in listing.routines
        ],
    }


def dumps_json(listing):
    return json.dumps(to_dict(listing), indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# file entry points

def loads_listing(text, source="<string>"):
    if text.lstrip().startswith("{"):
        return loads_json(text, source)
    return loads_text(text, source)


def load_listing(path):
    """Load a listing file in either encoding."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ListingParseError(exc.strerror or str(exc), source=str(path)) from None
    except UnicodeDecodeError as exc:
        raise ListingParseError(f"not UTF-8: {exc.reason}", source=str(path)) from None
    return loads_listing(text, str(path))


def dump_listing(listing, path, fmt=None):
    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "text"
    text = dumps_json(listing) if fmt == "json" else dumps_text(listing)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def listing_digest(listing):
    """Content hash that ignores which encoding the listing came from."""
    return hashlib.sha256(dumps_json(listing).encode("utf-8")).hexdigest()


def iter_instructions(listing: ProgramListing) -> Iterable[tuple]:
    for r in listing.routines:
        for insn in r.instructions:
            yield r, insn
