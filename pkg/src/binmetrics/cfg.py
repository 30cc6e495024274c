"""Basic-block partitioning and the graph facts the metrics consume."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

from . import x86
from .exceptions import CfgError

logger = logging.getLogger(__name__)

EXIT = -1  # virtual exit node for post-dominance


@dataclass(frozen=True)
class BasicBlock:
    head: int
    end: int
    instr_count: int
    succs: tuple = ()
    terminator: str = ""
    unresolved: bool = False  # indirect branch with no known targets

    @property
    def edge1(self):
        return self.succs[0] if self.succs else None

    @property
    def edge2(self):
        return self.succs[1] if len(self.succs) > 1 else None

    @property
    def is_predicate(self):
        return self.terminator in (x86.COND_BRANCH, x86.INDIRECT_BRANCH)


@dataclass(frozen=True)
class Cfg:
    name: str
    nodes: tuple
    entry: int
    edges: tuple = field(init=False)
    predicate_nodes: frozenset = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((b.head, s) for b in self.nodes for s in b.succs))
        object.__setattr__(self, "predicate_nodes",
                           frozenset(b.head for b in self.nodes if b.is_predicate))

    @property
    def v(self):
        return len(self.nodes)

    @property
    def e(self):
        return len(self.edges)

    @cached_property
    def block(self):
        return {b.head: b for b in self.nodes}

    @cached_property
    def successors(self):
        return {b.head: tuple(dict.fromkeys(b.succs)) for b in self.nodes}

    @cached_property
    def predecessors(self):
        preds = {b.head: [] for b in self.nodes}
        for src, dst in self.edges:
            if src not in preds[dst]:
                preds[dst].append(src)
        return {k: tuple(v) for k, v in preds.items()}

    @cached_property
    def reachable(self):
        """Heads reachable from the entry, in reverse postorder."""
        seen, order = set(), []
        stack = [(self.entry, iter(self.successors[self.entry]))]
        seen.add(self.entry)
        while stack:
            node, it = stack[-1]
            for nxt in it:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, iter(self.successors[nxt])))
                    break
            else:
                stack.pop()
                order.append(node)
        return tuple(reversed(order))

    @property
    def unreachable(self):
        live = set(self.reachable)
        return tuple(b.head for b in self.nodes if b.head not in live)

    def reachable_subgraph(self):
        """The same graph with blocks the entry cannot reach dropped."""
        if not self.unreachable:
            return self
        live = set(self.reachable)
        return Cfg(self.name, tuple(b for b in self.nodes if b.head in live), self.entry)


def build_cfg(routine):
    """Partition a routine into maximal basic blocks.

    A block ends at a jump, an indirect jump or a return, or right before
    the target of some link; calls never end a block. Each block's edges
    are the links of its last instruction.
    """
    insns = routine.instructions
    if not insns:
        raise CfgError(f"routine {routine.name!r}: no instructions")

    ends = []
    leaders = {insns[0].address}
    for i, insn in enumerate(insns):
        nxt = insns[i + 1].address if i + 1 < len(insns) else None
        # anything other than plain fall-through is a link in the block sense
        ending = insn.is_terminator or insn.links != ((nxt,) if nxt is not None else ())
        ends.append(ending)
        if ending:
            leaders.update(a for a in insn.links if a is not None)
            if nxt is not None:
                leaders.add(nxt)

    nodes = []
    start = 0
    for i, insn in enumerate(insns):
        last = i + 1 == len(insns) or insns[i + 1].address in leaders
        if not last:
            continue
        head = insns[start]
        term = next(iter(insn.classes & x86.TERMINATORS), "")
        nodes.append(BasicBlock(
            head=head.address,
            end=insn.address,
            instr_count=i - start + 1,
            succs=tuple(insn.links),
            terminator=term,
            unresolved=term == x86.INDIRECT_BRANCH and not insn.links,
        ))
        start = i + 1
    return Cfg(routine.name, tuple(nodes), insns[0].address)


def _dominator_sets(order, root, preds):
    """Iterative data-flow dominators over ``order`` (root first)."""
    universe = frozenset(order)
    dom = {n: universe for n in order}
    dom[root] = frozenset({root})
    changed = True
    while changed:
        changed = False
        for n in order:
            if n == root:
                continue
            ps = [dom[p] for p in preds.get(n, ()) if p in dom]
            new = frozenset.intersection(*ps) if ps else frozenset()
            new = new | {n}
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom


def _immediate(dom):
    idom = {}
    for n, ds in dom.items():
        strict = ds - {n}
        # the strict dominator dominated by all the others
        idom[n] = max(strict, key=lambda d: len(dom[d])) if strict else None
    return idom


def dominators(cfg):
    """Map each reachable block head to the set of heads dominating it."""
    if cfg.unreachable:
        logger.info("%s: %d unreachable block(s) excluded from dominance: %s", cfg.name,
                    len(cfg.unreachable), ", ".join(f"{h:#x}" for h in cfg.unreachable))
    return _dominator_sets(cfg.reachable, cfg.entry, cfg.predecessors)


def post_dominators(cfg):
    """Post-dominator sets over reachable blocks, rooted at a virtual exit.

    Blocks without successors feed the virtual exit; so do blocks that
    cannot reach any exit (endless loops), keeping the relation total.
    """
    live = cfg.reachable
    succ = {n: [s for s in cfg.successors[n]] for n in live}
    sinks = [n for n in live if not succ[n]]
    # blocks that can reach a sink
    rpred = cfg.predecessors
    reaches = set(sinks)
    work = list(sinks)
    while work:
        n = work.pop()
        for p in rpred[n]:
            if p not in reaches and p in succ:
                reaches.add(p)
                work.append(p)
    for n in live:
        if not succ[n] or n not in reaches:
            succ[n].append(EXIT)

    # reverse graph: predecessors there are successors here
    rev_preds = {n: succ[n] for n in live}
    order = [EXIT] + list(reversed(live))
    return _dominator_sets(order, EXIT, rev_preds)


def immediate_dominators(cfg):
    return _immediate(dominators(cfg))


def immediate_post_dominators(cfg):
    return _immediate(post_dominators(cfg))


def predicate_nesting(cfg, dom=None):
    """Nesting level of every reachable predicate: how many predicates strictly dominate it."""
    if dom is None:
        dom = dominators(cfg)
    preds = cfg.predicate_nodes
    return {p: len((dom[p] - {p}) & preds) for p in sorted(preds) if p in dom}


def sphere_complexity(cfg, routine=None, ipdom=None):
    """Instruction count of each predicate plus the blocks in its sphere of influence.

    The sphere is every block reachable from the predicate before control
    reaches the predicate's immediate post-dominator.
    """
    if ipdom is None:
        ipdom = immediate_post_dominators(cfg)
    out = {}
    for p in sorted(cfg.predicate_nodes):
        if p not in ipdom:
            continue
        stop = ipdom[p]
        seen = set()
        work = [s for s in cfg.successors[p] if s != stop]
        while work:
            n = work.pop()
            if n in seen or n == p or n == stop:
                continue
            seen.add(n)
            work.extend(cfg.successors[n])
        out[p] = cfg.block[p].instr_count + sum(cfg.block[n].instr_count for n in seen)
    return out


def to_dot(cfg):
    lines = [f'digraph "{cfg.name}" {{', "  node [shape=box];"]
    for b in cfg.nodes:
        lines.append(f'  "{b.head:#x}" [label="{b.head:#x}-{b.end:#x}"];')
    for src, dst in cfg.edges:
        lines.append(f'  "{src:#x}" -> "{dst:#x}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
