"""Fixed tables for the general-purpose IA-32 instruction subset.

Everything the metrics need to know about a mnemonic lives here: its
semantic class, which operands it reads and writes, and whether it
sets the flags a conditional branch consumes.
"""

import re

COND_BRANCH = "cond-branch"
UNCOND_BRANCH = "uncond-branch"
INDIRECT_BRANCH = "indirect-branch"
CALL = "call"
RET = "ret"
ASSIGNMENT = "assignment"
COMPARE = "compare"
OTHER = "other"

CLASSES = (COND_BRANCH, UNCOND_BRANCH, INDIRECT_BRANCH, CALL, RET,
           ASSIGNMENT, COMPARE, OTHER)
BRANCH_FAMILY = frozenset({COND_BRANCH, UNCOND_BRANCH, INDIRECT_BRANCH, CALL, RET})
# classes that end a basic block; calls do not
TERMINATORS = frozenset({COND_BRANCH, UNCOND_BRANCH, INDIRECT_BRANCH, RET})

_CC = ("a", "ae", "b", "be", "c", "e", "g", "ge", "l", "le", "na", "nae",
       "nb", "nbe", "nc", "ne", "ng", "nge", "nl", "nle", "no", "np", "ns",
       "nz", "o", "p", "pe", "po", "s", "z")

COND_JUMPS = frozenset(
    ["j" + cc for cc in _CC]
    + ["jcxz", "jecxz", "loop", "loope", "loopne", "loopz", "loopnz"])
RETURNS = frozenset({"ret", "retn", "retf", "iret", "iretd"})

# destination is written, not read
WRITE_DEST = frozenset(
    {"mov", "movzx", "movsx", "lea", "pop"}
    | {"set" + cc for cc in _CC}
    | {"cmov" + cc for cc in _CC})
# destination is read and written
READ_WRITE_DEST = frozenset({
    "add", "sub", "adc", "sbb", "inc", "dec", "neg", "not", "and", "or",
    "xor", "shl", "shr", "sal", "sar", "rol", "ror", "rcl", "rcr", "bswap",
    "shld", "shrd", "xadd", "cmpxchg",
})
# every explicit operand is read and written
READ_WRITE_ALL = frozenset({"xchg"})
# implicit-accumulator arithmetic; the explicit operand is only read
ACCUMULATOR = frozenset({"mul", "div", "idiv"})
STRING_OPS = frozenset({
    "movs", "movsb", "movsw", "movsd", "stos", "stosb", "stosw", "stosd",
    "lods", "lodsb", "lodsw", "lodsd", "rep", "repe", "repne",
})

ASSIGNMENTS = (WRITE_DEST | READ_WRITE_DEST | READ_WRITE_ALL | ACCUMULATOR
               | STRING_OPS | {"push", "imul", "cdq", "cwde", "cbw", "lahf"})
COMPARES = frozenset({"cmp", "test", "bt", "scas", "scasb", "scasd",
                      "cmps", "cmpsb", "cmpsd"})
KNOWN_OTHER = frozenset({
    "nop", "int", "int3", "into", "hlt", "leave", "enter", "cld", "std",
    "clc", "stc", "cmc", "wait", "fwait", "pushad", "popad", "pushfd",
    "popfd", "pushf", "popf", "sahf", "cpuid", "rdtsc", "ud2", "lock",
})

# instructions after which a conditional branch no longer sees a compare's flags
FLAG_SETTERS = (COMPARES | READ_WRITE_DEST | ACCUMULATOR
                | {"imul"}) - {"not", "bswap"}

REGISTERS = frozenset({
    "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp",
    "ax", "bx", "cx", "dx", "si", "di", "bp", "sp",
    "al", "ah", "bl", "bh", "cl", "ch", "dl", "dh",
    "cs", "ds", "es", "fs", "gs", "ss", "eip", "eflags",
})
RETURN_REGISTERS = frozenset({"eax", "ax", "al", "ah"})
FRAME_REGISTERS = frozenset({"ebp", "esp", "bp", "sp"})

_REGISTER_RE = re.compile(r"\b(" + "|".join(sorted(REGISTERS, key=len, reverse=True)) + r")\b")


def is_known(mnemonic):
    return (mnemonic in COND_JUMPS or mnemonic in RETURNS or mnemonic in ASSIGNMENTS
            or mnemonic in COMPARES or mnemonic in KNOWN_OTHER
            or mnemonic in ("jmp", "call"))


def registers_in(text):
    """Return the register names mentioned inside an operand token."""
    return _REGISTER_RE.findall(text)
