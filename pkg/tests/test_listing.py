import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binmetrics import x86
from binmetrics.exceptions import ListingInvariantError, ListingParseError
from binmetrics.listing import (
    CODE_TARGET, IMMEDIATE, MEMORY, REGISTER, Operand, build_listing, classify, dumps_json, dumps_text,
    load_listing, loads_listing, parse_operand,
)
from binmetrics.synthetic import random_routine

from conftest import data_path, make_listing


def test_f1_shape(f1_listing):
    assert f1_listing.module_name == "m1"
    assert f1_listing.image_base == 0x400000
    assert len(f1_listing.routines) == 1
    f1 = f1_listing.routine("f1")
    assert len(f1.instructions) == 8
    assert f1.entry == 0x1000
    assert f1.callees == ("strcpy",)


def test_f1_links(f1):
    links = {i.address: i.links for i in f1.instructions}
    assert links[0x1007] == (0x100E, 0x1009)  # taken target first, then fall-through
    assert links[0x1009] == (0x100E,)  # call falls through
    assert links[0x1011] == ()


def test_empty_listing(tmp_path):
    p = tmp_path / "empty.lst"
    p.write_text("format 1\nmodule nothing\n")
    listing = load_listing(p)
    assert listing.routines == ()
    assert listing.module_name == "nothing"


def test_dangling_link():
    with pytest.raises(ListingInvariantError, match="dangling link") as err:
        make_listing("routine bad @0x1000\n0x1000: jmp 0x9999\n")
    assert err.value.routine == "bad"


def test_dangling_override_link():
    with pytest.raises(ListingInvariantError, match="dangling link"):
        make_listing("routine bad @0x1000\n0x1000: nop ; links=0x9999\n0x1001: ret\n")


def test_duplicate_address():
    with pytest.raises(ListingInvariantError, match="duplicate address"):
        make_listing("routine d @0x1000\n0x1000: nop\n0x1000: ret\n")


def test_descending_addresses():
    with pytest.raises(ListingInvariantError, match="not ascending"):
        make_listing("routine d @0x1004\n0x1004: nop\n0x1000: ret\n")


def test_entry_must_be_first_instruction():
    with pytest.raises(ListingInvariantError, match="entry"):
        make_listing("routine d @0x0fff\n0x1000: ret\n")


def test_overlapping_routines():
    with pytest.raises(ListingInvariantError, match="overlaps"):
        make_listing("routine a @0x1000\n0x1000: nop\n0x1004: ret\nroutine b @0x1002\n0x1002: ret\n")


def test_duplicate_routine_names():
    with pytest.raises(ListingInvariantError, match="duplicate routine"):
        make_listing("routine a @0x1000\n0x1000: ret\nroutine a @0x2000\n0x2000: ret\n")


def test_conditional_branch_falling_off_the_end():
    with pytest.raises(ListingInvariantError, match="past the routine end"):
        make_listing("routine a @0x1000\n0x1000: jz 0x1000\n")


@pytest.mark.parametrize("text, line", [
    ("module m\nroutine a @0x1000\n0x1000: ret\n", 1),
    ("format 9\n", 1),
    ("format 1\nroutine a @0x1000\n0x1000 ret\n", 3),
    ("format 1\n0x1000: ret\n", 2),
    ("format 1\nroutine a @0x1000\n0x1000: mov eax, \n", 3),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ListingParseError) as err:
        loads_listing(text, "x.lst")
    assert err.value.line == line
    assert f"x.lst:{line}:" in str(err.value)


def test_missing_file():
    with pytest.raises(ListingParseError):
        load_listing(data_path("does-not-exist.lst"))


@pytest.mark.parametrize("mnemonic, operands, expected", [
    ("jz", [Operand(CODE_TARGET, "0x100e", 0x100E)], {x86.COND_BRANCH}),
    ("mov", [Operand(REGISTER, "ebp"), Operand(REGISTER, "esp")], {x86.ASSIGNMENT}),
    ("cmp", [Operand(MEMORY, "[ebp+8]"), Operand(IMMEDIATE, "0", 0)], {x86.COMPARE}),
    ("jmp", [Operand(CODE_TARGET, "0x10", 0x10)], {x86.UNCOND_BRANCH}),
    ("jmp", [Operand(REGISTER, "eax")], {x86.INDIRECT_BRANCH}),
    ("jmp", [Operand(MEMORY, "[off_1+eax*4]")], {x86.INDIRECT_BRANCH}),
    ("call", [Operand(CODE_TARGET, "strcpy")], {x86.CALL}),
    ("retn", [], {x86.RET}),
    ("push", [Operand(REGISTER, "ebp")], {x86.ASSIGNMENT}),
    ("test", [Operand(REGISTER, "al"), Operand(REGISTER, "al")], {x86.COMPARE}),
    ("nop", [], {x86.OTHER}),
    ("fldz", [], {x86.OTHER}),
])
def test_classify(mnemonic, operands, expected):
    assert classify(mnemonic, operands) == expected


def test_unknown_mnemonic_reported_once(caplog):
    make_listing("routine a @0x1000\n0x1000: frobnicate eax\n0x1002: frobnicate ebx\n0x1004: ret\n")
    warnings = [r for r in caplog.records if "frobnicate" in r.getMessage()]
    assert len(warnings) == 1


@pytest.mark.parametrize("text, mnemonic, kind, token, value", [
    ("EBP", "push", REGISTER, "ebp", None),
    ("0", "cmp", IMMEDIATE, "0", 0),
    ("0Ah", "push", IMMEDIATE, "0xa", 10),
    ("-8", "add", IMMEDIATE, "-8", -8),
    ("[ebp + 8]", "cmp", MEMORY, "[ebp+8]", None),
    ("dword ptr [ebp+0Ch]", "push", MEMORY, "[ebp+0xc]", None),
    ("[ebp+var_34]", "cmp", MEMORY, "[ebp+var_34]", None),
    ("ds:dword_404000", "mov", MEMORY, "[dword_404000]", None),
    ("ds:strcpy", "call", CODE_TARGET, "strcpy", None),
    ("0x100e", "jz", CODE_TARGET, "0x100e", 0x100E),
    ("short loc_4135B6", "jnz", CODE_TARGET, "loc_4135b6", 0x4135B6),
    ("offset Format", "push", IMMEDIATE, "offset:format", None),
    ("off_1000[eax*4]", "jmp", MEMORY, "[off_1000+eax*4]", None),
])
def test_parse_operand(text, mnemonic, kind, token, value):
    assert parse_operand(text, mnemonic) == Operand(kind, token, value)


def test_operand_tokens_are_canonical():
    with pytest.raises(ValueError):
        Operand(REGISTER, "EAX")
    with pytest.raises(ValueError):
        Operand(MEMORY, "[ebp + 8]")


def test_ida_style_listing_parses():
    listing = make_listing("""routine sub_4135A0 @0x4135a0
4135A0h: push eax
4135A1h: push 0Ah
4135A3h: lea eax, [ebp+Source]
4135A6h: push eax
4135A7h: call fgets
4135ACh: add esp, 0Ch
4135AFh: cmp [ebp+var_34], 0
4135B3h: jnz short loc_4135B6
4135B5h: nop
4135B6h: ret
""")
    r = listing.routines[0]
    assert r.callees == ("fgets",)
    assert r.instructions[-3].links == (0x4135B6, 0x4135B5)


def test_json_form_with_explicit_fields():
    doc = {
        "format_version": 1, "module": "m", "image_base": "0x400000",
        "routines": [{
            "name": "a", "entry": "0x10",
            "instructions": [
                {"address": 16, "mnemonic": "jmp", "operands": ["eax"], "links": [17, 18]},
                {"address": 17, "mnemonic": "ret", "operands": []},
                {"address": 18, "mnemonic": "ret", "operands": [], "classes": ["ret"]},
            ],
        }],
    }
    listing = loads_listing(json.dumps(doc))
    jmp = listing.routines[0].instructions[0]
    assert jmp.classes == {x86.INDIRECT_BRANCH}
    assert jmp.links == (17, 18)
    assert listing.image_base == 0x400000


def test_text_annotations_override_classes_and_links():
    listing = make_listing("routine a @0x10\n0x10: call exit ; links= classes=ret\n0x15: ret\n")
    insn = listing.routines[0].instructions[0]
    assert insn.links == ()
    assert insn.classes == {x86.RET}


def _roundtrip(listing):
    assert loads_listing(dumps_text(listing)) == listing
    assert loads_listing(dumps_json(listing)) == listing


def test_roundtrip_fixtures(f1_listing, demo_listing):
    _roundtrip(f1_listing)
    _roundtrip(demo_listing)
    _roundtrip(make_listing("routine a @0x10\n0x10: call exit ; links= classes=ret\n0x15: ret\n"))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 80))
def test_roundtrip_random(seed, n):
    rng = random.Random(seed)
    listing = build_listing("m", [random_routine(rng, n)])
    _roundtrip(listing)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120))
def test_loaded_listing_invariants(seed, n):
    rng = random.Random(seed)
    listing = loads_listing(dumps_text(build_listing("m", [random_routine(rng, n)])))
    for r in listing.routines:
        addrs = {i.address for i in r.instructions}
        for insn in r.instructions:
            assert insn.classes
            assert len(insn.classes & x86.BRANCH_FAMILY) <= 1
            assert set(insn.links) <= addrs
            if x86.COND_BRANCH in insn.classes:
                assert len(insn.links) == 2
            elif x86.UNCOND_BRANCH in insn.classes:
                assert len(insn.links) == 1
            elif x86.RET in insn.classes:
                assert insn.links == ()
