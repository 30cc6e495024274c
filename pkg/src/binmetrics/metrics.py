"""Per-routine complexity metrics over a routine and its CFG."""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, fields

from . import x86
from .banned import BannedFunctionTable
from .cfg import build_cfg, dominators, immediate_post_dominators, predicate_nesting, sphere_complexity
from .exceptions import BinmetricsError, UnknownMetricError
from .listing import CODE_TARGET, IMMEDIATE, MEMORY, REGISTER, parse_number

METRIC_NAMES = (
    "LOC", "BBLs", "CALLS", "Jilb", "ABC", "CC", "CC_mod", "R", "Pi",
    "H.N", "H.N*", "H.V", "H.D", "H.E", "H.B", "Harr", "Bound", "Span",
    "H&C", "C&G", "Oviedo", "Chapin", "Cocol", "Assign", "Condit", "Global", "Exp",
)

BOUND_IN_DEGREE = "in-degree"
BOUND_LITERAL = "literal"


@dataclass(frozen=True)
class HalsteadCounts:
    N1: int
    N2: int
    n1: int
    n2: int

    @property
    def length(self):
        return self.N1 + self.N2

    @property
    def vocabulary(self):
        return self.n1 + self.n2

    @property
    def calculated_length(self):
        return _nlogn(self.n1) + _nlogn(self.n2)

    @property
    def volume(self):
        n = self.vocabulary
        return self.length * math.log2(n) if n > 0 else 0.0

    @property
    def difficulty(self):
        if self.n2 == 0:
            return 0.0
        return (self.n1 / 2) * (self.N2 / self.n2)

    @property
    def effort(self):
        return self.difficulty * self.volume

    @property
    def bugs(self):
        return self.effort ** (2 / 3) / 3000


def _nlogn(n):
    return n * math.log2(n) if n > 0 else 0.0


@dataclass(frozen=True)
class MetricVector:
    LOC: float
    BBLs: float
    CALLS: float
    Jilb: float
    ABC: float
    CC: float
    CC_mod: float
    R: float
    Pi: float
    H_N: float
    H_N_star: float
    H_V: float
    H_D: float
    H_E: float
    H_B: float
    Harr: float
    Bound: float
    Span: float
    H_and_C: float
    C_and_G: float
    Oviedo: float
    Chapin: float
    Cocol: float
    Assign: float
    Condit: float
    Global: float
    Exp: float

    def __getitem__(self, name):
        return getattr(self, _ATTR[check_metric(name)])

    def as_dict(self):
        return {name: getattr(self, attr) for name, attr in _ATTR.items()}

    def values(self, names=METRIC_NAMES):
        return [self[n] for n in names]

    @classmethod
    def from_dict(cls, values):
        return cls(**{_ATTR[n]: float(values[n]) for n in METRIC_NAMES})


_ATTR = dict(zip(METRIC_NAMES, (f.name for f in fields(MetricVector))))
_CANON = {n.lower(): n for n in METRIC_NAMES}
_CANON.update({a.lower(): n for n, a in _ATTR.items()})
_CANON.update({"bbls": "BBLs", "calls": "CALLS", "h&m": "Harr"})


def check_metric(name):
    """Return the canonical spelling of a metric name or raise UnknownMetricError."""
    canon = _CANON.get(str(name).strip().lower())
    if canon is None:
        raise UnknownMetricError(f"unknown metric {name!r}; choose from {', '.join(METRIC_NAMES)}")
    return canon


# ---------------------------------------------------------------------------
# Halstead

def halstead_counts(routine):
    """Operators are mnemonics, operands are canonical operand tokens."""
    ops = Counter(i.mnemonic for i in routine.instructions)
    opnds = Counter(o.token for i in routine.instructions for o in i.operands)
    return HalsteadCounts(sum(ops.values()), sum(opnds.values()), len(ops), len(opnds))


def halstead(routine):
    if not routine.instructions:
        raise BinmetricsError(f"routine {routine.name!r}: no instructions")
    h = halstead_counts(routine)
    return h, {
        "H.N": float(h.length),
        "H.N*": h.calculated_length,
        "H.V": h.volume,
        "H.D": h.difficulty,
        "H.E": h.effort,
        "H.B": h.bugs,
    }


# ---------------------------------------------------------------------------
# graph metrics

def graph_metrics(cfg, bound_formula=BOUND_IN_DEGREE):
    """CC, CC_mod, R, Pi, Harr and Bound over the reachable part of ``cfg``."""
    g = cfg.reachable_subgraph()
    v, e = g.v, g.e
    cc = e - v + 2
    # an indirect jump counts as one two-way decision whatever its fan-out
    e_mod = sum(2 if b.terminator == x86.INDIRECT_BRANCH else len(b.succs) for b in g.nodes)
    cc_mod = e_mod - v + 2
    dom = dominators(g)
    nesting = predicate_nesting(g, dom)
    spheres = sphere_complexity(g, ipdom=immediate_post_dominators(g))

    if bound_formula == BOUND_IN_DEGREE:
        s_a = e
    elif bound_formula == BOUND_LITERAL:
        indeg = Counter(dst for _, dst in g.edges)
        outdeg = Counter(src for src, _ in g.edges)
        s_a = sum(indeg[b.head] - outdeg[b.head] for b in g.nodes)
    else:
        raise ValueError(f"unknown bound formula {bound_formula!r}")
    bound = 1 - (v - 1) / s_a if s_a else 0.0

    return {
        "CC": float(cc),
        "CC_mod": float(cc_mod),
        "R": e / v,
        "Pi": float(cc_mod + sum(nesting.values())),
        "Harr": float(sum(spheres.values())),
        "Bound": bound,
    }


# ---------------------------------------------------------------------------
# counting metrics

def is_global(op):
    return op.kind == MEMORY and not x86.registers_in(op.token)


def counting_metrics(routine, cfg):
    insns = routine.instructions
    n_assign = sum(x86.ASSIGNMENT in i.classes for i in insns)
    n_cond = sum(x86.COND_BRANCH in i.classes for i in insns)
    n_calls = sum(x86.CALL in i.classes for i in insns)
    n_ops = len(insns)  # N1: one operator per instruction
    containing = defaultdict(set)
    for idx, insn in enumerate(insns):
        for op in insn.operands:
            containing[op.token].add(idx)
    return {
        "LOC": float(len(insns)),
        "BBLs": float(cfg.v),
        "CALLS": float(n_calls),
        "Assign": float(n_assign),
        "Condit": float(n_cond),
        "Global": float(sum(is_global(o) for i in insns for o in i.operands)),
        "Jilb": n_cond / n_ops if n_ops else 0.0,
        "ABC": math.sqrt(n_assign ** 2 + n_cond ** 2 + n_calls ** 2),
        "Span": float(sum(len(s) for s in containing.values())),
    }


# ---------------------------------------------------------------------------
# data-flow metrics

_FRAME_SLOT = re.compile(r"^\[(ebp|esp|bp|sp)(?:([+-])(.+))?\]$")


def operand_access(insn):
    """Yield ``(operand, reads, writes)`` for each explicit operand."""
    m, ops = insn.mnemonic, insn.operands
    for idx, op in enumerate(ops):
        if op.kind in (CODE_TARGET, IMMEDIATE):
            yield op, False, False
            continue
        first = idx == 0
        if m == "lea":
            # address arithmetic only; nothing is loaded
            yield op, False, first
        elif m in x86.WRITE_DEST:
            yield op, not first, first
        elif m in x86.READ_WRITE_DEST:
            yield op, True, first
        elif m in x86.READ_WRITE_ALL:
            yield op, True, True
        elif m == "imul" and len(ops) > 1:
            yield op, not (first and len(ops) == 3), first
        else:
            yield op, True, False


def frame_offset(token):
    """Signed frame offset of an ebp-based slot; None when not ebp-based or unknown."""
    m = _FRAME_SLOT.match(token)
    if not m or m.group(1) not in ("ebp", "bp"):
        return None
    if m.group(2) is None:
        return 0
    body = m.group(3)
    if body.startswith("arg_"):
        return 8
    if body.startswith("var_"):
        return -1
    value = parse_number(body)
    if value is None:
        return None
    return value if m.group(2) == "+" else -value


def is_stack_slot(op):
    return op.kind == MEMORY and _FRAME_SLOT.match(op.token) is not None


def is_variable(op):
    return op.kind == REGISTER or is_stack_slot(op)


def is_arg_slot(op):
    off = frame_offset(op.token) if op.kind == MEMORY else None
    return off is not None and off >= 8


def is_local_slot(op):
    off = frame_offset(op.token) if op.kind == MEMORY else None
    return off is not None and off < 0


def _flags_feed_branch(insns, idx):
    for insn in insns[idx + 1:]:
        if x86.COND_BRANCH in insn.classes:
            return True
        if insn.mnemonic in x86.FLAG_SETTERS or x86.CALL in insn.classes or insn.is_terminator:
            return False
    return False


@dataclass(frozen=True)
class DataflowFacts:
    fan_in: int
    fan_out: int
    args: int
    returns_value: bool
    oviedo_pairs: int
    outputs: int
    locals: int
    control_vars: int


def dataflow_facts(routine, cfg, callers=()):
    insns = routine.instructions
    global_reads, global_writes, arg_reads, local_slots = set(), set(), set(), set()
    outputs = set()
    tainted = set()  # registers holding an argument value (possible pointer)
    returns_value = False
    for insn in insns:
        for op, reads, writes in operand_access(insn):
            if is_global(op):
                if reads:
                    global_reads.add(op.token)
                if writes:
                    global_writes.add(op.token)
                    outputs.add(op.token)
            if reads and is_arg_slot(op):
                arg_reads.add(op.token)
            if is_local_slot(op):
                local_slots.add(op.token)
            if writes and op.kind == REGISTER and op.token in x86.RETURN_REGISTERS:
                returns_value = True
            if writes and op.kind == MEMORY and not is_stack_slot(op):
                if set(x86.registers_in(op.token)) & tainted:
                    outputs.add(op.token)
        # track argument-loaded registers after the instruction's own accesses
        ops = insn.operands
        if ops and ops[0].kind == REGISTER and any(w for _, _, w in operand_access(insn)):
            dest = ops[0].token
            if insn.mnemonic == "mov" and len(ops) == 2 and is_arg_slot(ops[1]):
                tainted.add(dest)
            else:
                tainted.discard(dest)
    if returns_value:
        outputs.add("eax")

    control = set()
    for idx, insn in enumerate(insns):
        if x86.COMPARE in insn.classes and _flags_feed_branch(insns, idx):
            control.update(o.token for o in insn.operands if o.kind in (REGISTER, MEMORY))

    pairs = set()
    pos = 0
    for b in cfg.nodes:
        defined = set()
        for insn in insns[pos:pos + b.instr_count]:
            for op, reads, _ in operand_access(insn):
                if reads and is_variable(op) and op.token not in defined:
                    pairs.add((b.head, op.token))
            for op, _, writes in operand_access(insn):
                if writes and is_variable(op):
                    defined.add(op.token)
        pos += b.instr_count

    return DataflowFacts(
        fan_in=len(set(callers)) + len(global_reads),
        fan_out=len(routine.callees) + len(global_writes),
        args=len(arg_reads) + (1 if returns_value else 0),
        returns_value=returns_value,
        oviedo_pairs=len(pairs),
        outputs=len(outputs),
        locals=len(local_slots),
        control_vars=len(control),
    )


def dataflow_metrics(routine, cfg, callers=()):
    f = dataflow_facts(routine, cfg, callers)
    loc = len(routine.instructions)
    return {
        "H&C": float(loc * (f.fan_in + f.fan_out) ** 2),
        "C&G": f.fan_out ** 2 + f.args / (f.fan_out + 1),
        "Oviedo": float(f.oviedo_pairs),
        "Chapin": float(f.outputs + 2 * f.locals + 3 * f.control_vars),
    }


# ---------------------------------------------------------------------------
# experimental metric and Cocol

def banned_calls(routine, table):
    """Weighted call counts per listed function called by ``routine``."""
    counts = Counter()
    for insn in routine.instructions:
        if x86.CALL in insn.classes and insn.operands and insn.operands[0].kind == CODE_TARGET:
            name = insn.operands[0].token
            if table.coefficient(name) is not None:
                counts[name] += 1
    return {name: n * table.coefficient(name) for name, n in counts.items()}


def exp_metric(routine, hb, table=None):
    """H.B scaled by one plus the weighted call count of every banned callee."""
    if hb < 0:
        raise ValueError("H.B must be non-negative")
    if table is None:
        table = BannedFunctionTable.default()
    weights = banned_calls(routine, table)
    if not weights:
        return hb
    return hb * sum(v + 1 for v in weights.values())


def cocol(hb, loc, cc):
    return hb + loc + cc


# ---------------------------------------------------------------------------
# whole-routine and whole-listing entry points

def callers_map(listing):
    callers = defaultdict(set)
    for r in listing.routines:
        for c in r.callees:
            if c != r.name:
                callers[c].add(r.name)
    return callers


def routine_metrics(routine, table=None, callers=(), cfg=None, bound_formula=BOUND_IN_DEGREE):
    if table is None:
        table = BannedFunctionTable.default()
    if cfg is None:
        cfg = build_cfg(routine)
    _, hal = halstead(routine)
    values = dict(hal)
    values.update(counting_metrics(routine, cfg))
    values.update(graph_metrics(cfg, bound_formula))
    values.update(dataflow_metrics(routine, cfg, callers))
    values["Exp"] = exp_metric(routine, values["H.B"], table)
    values["Cocol"] = cocol(values["H.B"], values["LOC"], values["CC"])
    return MetricVector.from_dict(values)


class MetricsError(BinmetricsError):
    def __init__(self, failures):
        self.failures = failures
        super().__init__("; ".join(f"{name}: {exc}" for name, exc in failures))


def compute_all(listing, table=None, bound_formula=BOUND_IN_DEGREE):
    """MetricVector for every routine with at least one instruction."""
    if table is None:
        table = BannedFunctionTable.default()
    callers = callers_map(listing)
    out, failures = {}, []
    for r in listing.routines:
        if not r.instructions:
            continue
        try:
            out[r.name] = routine_metrics(r, table, callers.get(r.name, ()), bound_formula=bound_formula)
        except BinmetricsError as exc:
            failures.append((r.name, exc))
    if failures:
        raise MetricsError(failures)
    return out


def format_value(value):
    return f"{value:.6g}"


def metrics_rows(listing, vectors, names=METRIC_NAMES):
    entries = {r.name: r.entry for r in listing.routines}
    for name, vec in vectors.items():
        yield [listing.module_name, name, f"{entries[name]:#x}"] + [format_value(vec[n]) for n in names]

