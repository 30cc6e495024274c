import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binmetrics.cfg import (
    EXIT, build_cfg, dominators, immediate_dominators, immediate_post_dominators, post_dominators,
    predicate_nesting, sphere_complexity, to_dot,
)
from binmetrics.exceptions import CfgError
from binmetrics.listing import Routine
from binmetrics.synthetic import random_routine, structured_routine

from conftest import DIAMOND, NESTED_IF, make_listing
from oracles import all_paths, brute_dominators


def _routine(body):
    return make_listing(body).routines[0]


def assert_partition(routine, cfg):
    """Blocks tile the routine: contiguous, disjoint, edges land on heads."""
    insns = routine.instructions
    pos = {i.address: k for k, i in enumerate(insns)}
    covered = []
    for b in cfg.nodes:
        start = pos[b.head]
        assert insns[start + b.instr_count - 1].address == b.end
        covered.extend(range(start, start + b.instr_count))
        # only the last instruction may divert control
        for insn in insns[start:start + b.instr_count - 1]:
            nxt = insns[pos[insn.address] + 1].address
            assert insn.links == (nxt,)
        assert b.succs == insns[start + b.instr_count - 1].links
    assert covered == list(range(len(insns)))
    heads = {b.head for b in cfg.nodes}
    assert all(dst in heads for _, dst in cfg.edges)
    assert cfg.entry == routine.entry


def test_f1_blocks(f1):
    cfg = build_cfg(f1)
    assert [(b.head, b.end, b.instr_count) for b in cfg.nodes] == [
        (0x1000, 0x1007, 4), (0x1009, 0x1009, 1), (0x100E, 0x1011, 3)]
    assert cfg.v == 3 and cfg.e == 3
    assert cfg.predicate_nodes == {0x1000}
    assert cfg.block[0x1000].succs == (0x100E, 0x1009)
    assert predicate_nesting(cfg) == {0x1000: 0}
    assert sphere_complexity(cfg) == {0x1000: 5}
    assert_partition(f1, cfg)


def test_single_return():
    cfg = build_cfg(_routine("routine r @0x10\n0x10: ret\n"))
    assert cfg.v == 1 and cfg.e == 0
    assert predicate_nesting(cfg) == {}


def test_straight_line_is_one_block():
    r = _routine("routine s @0x10\n0x10: mov eax, 1\n0x15: call strcpy\n0x1a: add eax, 2\n0x1d: ret\n")
    cfg = build_cfg(r)
    assert [(b.head, b.instr_count) for b in cfg.nodes] == [(0x10, 4)]


def test_empty_routine_rejected():
    with pytest.raises(CfgError):
        build_cfg(Routine("e", 0x10, ()))


def test_nested_if():
    cfg = build_cfg(_routine(NESTED_IF))
    assert cfg.v == 5 and cfg.e == 6
    assert cfg.e - cfg.v + 2 == 3
    assert predicate_nesting(cfg) == {0x1000: 0, 0x1005: 1}
    assert sphere_complexity(cfg) == {0x1000: 6, 0x1005: 3}


def test_diamond():
    cfg = build_cfg(_routine(DIAMOND))
    assert cfg.v == 4 and cfg.e == 4
    dom = dominators(cfg)
    assert dom[0x100C] == {0x1000, 0x100C}
    assert immediate_dominators(cfg)[0x100C] == 0x1000
    assert immediate_post_dominators(cfg)[0x1000] == 0x100C
    assert post_dominators(cfg)[0x100C] == {0x100C, EXIT}


def test_sphere_without_body_is_own_size():
    cfg = build_cfg(_routine("routine p @0x10\n0x10: cmp eax, 0\n0x13: jz 0x15\n0x15: ret\n"))
    assert sphere_complexity(cfg) == {0x10: 2}


def test_loop_nesting():
    r = _routine("""routine loop @0x10
0x10: cmp eax, 0
0x13: jz 0x20
0x15: cmp ebx, 0
0x18: jz 0x1c
0x1a: inc ebx
0x1c: dec eax
0x1e: jmp 0x10
0x20: ret
""")
    cfg = build_cfg(r)
    assert predicate_nesting(cfg) == {0x10: 0, 0x15: 1}
    assert_partition(r, cfg)


def test_infinite_loop_has_post_dominators():
    cfg = build_cfg(_routine("routine spin @0x10\n0x10: cmp eax, 0\n0x13: jz 0x10\n0x15: jmp 0x15\n"))
    pdom = post_dominators(cfg)
    assert set(pdom) == {EXIT, 0x10, 0x15}
    assert EXIT in pdom[0x10]


def test_unreachable_blocks_excluded_from_dominance():
    r = _routine("routine u @0x10\n0x10: jmp 0x14\n0x12: nop\n0x13: nop\n0x14: ret\n")
    cfg = build_cfg(r)
    assert cfg.unreachable == (0x12,)
    assert set(dominators(cfg)) == {0x10, 0x14}
    assert cfg.reachable_subgraph().v == 2


def test_indirect_jump_is_predicate_without_edges():
    cfg = build_cfg(_routine("routine j @0x10\n0x10: jmp eax\n0x12: ret\n"))
    b = cfg.block[0x10]
    assert b.succs == () and b.is_predicate


def test_call_does_not_split(f1):
    cfg = build_cfg(f1)
    assert all(b.terminator != "call" for b in cfg.nodes)


def test_deterministic(demo_listing):
    for r in demo_listing.routines:
        if r.instructions:
            assert build_cfg(r) == build_cfg(r)


def test_dot(f1):
    dot = to_dot(build_cfg(f1))
    assert dot.startswith('digraph "f1" {')
    assert '"0x1000" -> "0x100e";' in dot
    assert dot.count("->") == 3


def _succ(cfg):
    return {h: list(s) for h, s in cfg.successors.items()}


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200))
def test_random_partition(seed, n):
    r = random_routine(random.Random(seed), n)
    assert_partition(r, build_cfg(r))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120))
def test_dominators_match_brute_force(seed, n):
    cfg = build_cfg(random_routine(random.Random(seed), n))
    assert dominators(cfg) == brute_dominators(_succ(cfg), cfg.entry)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120))
def test_immediate_dominators_match_networkx(seed, n):
    cfg = build_cfg(random_routine(random.Random(seed), n))
    g = nx.DiGraph()
    g.add_nodes_from(cfg.reachable)
    g.add_edges_from((a, b) for a, b in cfg.edges if a in g)
    ref = nx.immediate_dominators(g, cfg.entry)
    ref.pop(cfg.entry)
    mine = immediate_dominators(cfg)
    mine.pop(cfg.entry, None)
    assert mine == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_dominance_on_every_path(seed, n):
    cfg = build_cfg(random_routine(random.Random(seed), n))
    succ = _succ(cfg)
    dom = dominators(cfg)
    for node in list(dom)[:6]:
        paths = all_paths(succ, cfg.entry, node, limit=200)
        assert paths
        common = set.intersection(*(set(p) for p in paths)) if len(paths) < 200 else dom[node]
        assert dom[node] <= common


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_structured_cyclomatic(seed, size):
    r, n_pred = structured_routine(random.Random(seed), max_statements=size)
    cfg = build_cfg(r)
    assert len(cfg.predicate_nodes) == n_pred
    assert cfg.e - cfg.v + 2 == n_pred + 1
