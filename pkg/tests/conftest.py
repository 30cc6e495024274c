import os

import pytest

from binmetrics.listing import load_listing, loads_text

DATA = os.path.join(os.path.dirname(__file__), "data")


def data_path(*parts):
    return os.path.join(DATA, *parts)


def make_listing(body, module="m1"):
    """Listing from routine/instruction lines; the format header is added."""
    return loads_text(f"format 1\nmodule {module}\n" + body)


@pytest.fixture
def f1_listing():
    return load_listing(data_path("f1.lst"))


@pytest.fixture
def f1(f1_listing):
    return f1_listing.routine("f1")


@pytest.fixture
def demo_listing():
    return load_listing(data_path("demo", "demo.lst"))


NESTED_IF = """routine nest @0x1000
0x1000: cmp eax, 0
0x1003: jz 0x1010
0x1005: cmp ebx, 0
0x1008: jz 0x100e
0x100a: mov ecx, 1
0x100e: mov edx, 2
0x1010: ret
"""

DIAMOND = """routine diamond @0x1000
0x1000: cmp eax, 0
0x1003: jz 0x100a
0x1005: mov eax, 1
0x1008: jmp 0x100c
0x100a: mov eax, 2
0x100c: ret
"""

CALLERS = """routine r1 @0x1000
0x1000: call r3
0x1005: ret
routine r2 @0x1100
0x1100: call 0x1200
0x1105: ret
routine r3 @0x1200
0x1200: call strcpy
0x1205: ret
"""

BIG = """routine big @0x1000
0x1000: cmp eax, 0
0x1003: jz 0x100a
0x1005: call strcpy
0x100a: cmp ebx, 0
0x100d: jz 0x1011
0x100f: inc ecx
0x1011: ret
routine small @0x2000
0x2000: ret
routine mid @0x2100
0x2100: mov eax, 1
0x2105: add eax, ebx
0x2107: ret
"""
