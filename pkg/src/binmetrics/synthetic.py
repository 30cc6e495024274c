"""Generators for synthetic routines, structured CFGs and evaluation corpora."""

from __future__ import annotations

import os
import random

from .listing import Routine, build_listing, dumps_text, make_instructions

REGS = ("eax", "ebx", "ecx", "edx", "esi", "edi")
ALU = ("add", "sub", "and", "or", "xor", "imul")
JCC = ("jz", "jnz", "jl", "jge", "ja", "jbe", "js")
BANNED_CALLS = ("strcpy", "strcat", "sprintf", "memcpy", "gets", "lstrcat")
DISCOURAGED_CALLS = ("strncpy", "strncat", "alloca")
SAFE_CALLS = ("malloc", "free", "printf", "fopen", "fread", "fclose", "strlen", "atoi")


def _rand_memory(rng):
    kind = rng.random()
    if kind < 0.4:
        return f"[ebp+{rng.choice((8, 12, 16, 20))}]"
    if kind < 0.8:
        return f"[ebp-{rng.choice((4, 8, 12, 16, 0x20))}]"
    if kind < 0.9:
        return f"[{rng.choice(REGS)}+{rng.randrange(0, 16, 4)}]"
    return f"[{0x404000 + rng.randrange(0, 64, 4):#x}]"


def _rand_source(rng):
    kind = rng.random()
    if kind < 0.45:
        return rng.choice(REGS)
    if kind < 0.75:
        return str(rng.randrange(0, 300))
    return _rand_memory(rng)


def random_straight(rng, calls=SAFE_CALLS):
    """One random non-branch instruction as ``(mnemonic, [operand text])``."""
    r = rng.random()
    dst = rng.choice(REGS)
    if r < 0.3:
        return "mov", [dst, _rand_source(rng)]
    if r < 0.4:
        return "mov", [_rand_memory(rng), rng.choice(REGS)]
    if r < 0.6:
        return rng.choice(ALU), [dst, _rand_source(rng)]
    if r < 0.7:
        return "push", [_rand_source(rng)]
    if r < 0.75:
        return "pop", [dst]
    if r < 0.8:
        return "lea", [dst, _rand_memory(rng)]
    if r < 0.88:
        return rng.choice(("cmp", "test")), [dst, _rand_source(rng)]
    if r < 0.94:
        return "call", [rng.choice(calls)]
    return rng.choice(("inc", "dec", "neg")), [dst]


def _assemble(name, entry, body, rng):
    """Lay out ``(mnemonic, operands, label_or_None)`` items with random sizes.

    Operands may hold ``("label", k)`` placeholders resolved to the
    address of the item at index ``k``.
    """
    addrs = []
    a = entry
    for _ in body:
        addrs.append(a)
        a += rng.randint(1, 6)
    recs = []
    for addr, (mnem, ops) in zip(addrs, body):
        text_ops = [f"{addrs[o[1]]:#x}" if isinstance(o, tuple) else o for o in ops]
        recs.append((addr, mnem, text_ops, None, None))
    return Routine(name, entry, make_instructions(recs))


def random_routine(rng, n, name="r", entry=0x1000, branch_rate=0.2, ret_rate=0.02,
                   calls=SAFE_CALLS, planted=()):
    """Straight-line code with randomly placed jumps to valid targets; ends in ``ret``.

    Each name in ``planted`` replaces one random non-branch instruction
    with a call to it.
    """
    n = max(1, n)
    body = []
    for i in range(n - 1):
        r = rng.random()
        if r < branch_rate:
            target = rng.randrange(0, n)
            mnem = rng.choice(JCC) if rng.random() < 0.7 else "jmp"
            body.append((mnem, [("label", target)]))
        elif r < branch_rate + ret_rate:
            body.append(("ret", []))
        else:
            body.append(random_straight(rng, calls))
    body.append(("ret", []))
    slots = [i for i, (m, _) in enumerate(body) if m not in JCC and m not in ("jmp", "ret")]
    for callee, i in zip(planted, rng.sample(slots, min(len(planted), len(slots)))):
        body[i] = ("call", [callee])
    return _assemble(name, entry, body, rng)


# ---------------------------------------------------------------------------
# structured code

def _gen_stmts(rng, depth, budget):
    stmts = []
    for _ in range(rng.randint(1, 4)):
        if budget[0] <= 0:
            break
        budget[0] -= 1
        r = rng.random()
        if depth > 0 and r < 0.25:
            stmts.append(("if", _gen_stmts(rng, depth - 1, budget)))
        elif depth > 0 and r < 0.45:
            stmts.append(("ifelse", _gen_stmts(rng, depth - 1, budget), _gen_stmts(rng, depth - 1, budget)))
        elif depth > 0 and r < 0.6:
            stmts.append(("while", _gen_stmts(rng, depth - 1, budget)))
        else:
            stmts.append(("simple",))
    if not stmts:
        stmts.append(("simple",))
    return stmts


def _emit(rng, stmts, out, pending):
    """Append instructions; ``pending`` collects (index, label-key) fixups."""
    for st in stmts:
        kind = st[0]
        if kind == "simple":
            for _ in range(rng.randint(1, 3)):
                out.append(list(random_straight(rng)))
        elif kind == "if":
            out.append(["cmp", [rng.choice(REGS), str(rng.randrange(10))]])
            jump = len(out)
            out.append([rng.choice(JCC), None])
            _emit(rng, st[1], out, pending)
            pending.append((jump, len(out)))
        elif kind == "ifelse":
            out.append(["cmp", [rng.choice(REGS), str(rng.randrange(10))]])
            jump = len(out)
            out.append([rng.choice(JCC), None])
            _emit(rng, st[1], out, pending)
            skip = len(out)
            out.append(["jmp", None])
            pending.append((jump, len(out)))
            _emit(rng, st[2], out, pending)
            pending.append((skip, len(out)))
        elif kind == "while":
            head = len(out)
            out.append(["cmp", [rng.choice(REGS), str(rng.randrange(10))]])
            jump = len(out)
            out.append([rng.choice(JCC), None])
            _emit(rng, st[1], out, pending)
            back = len(out)
            out.append(["jmp", None])
            pending.append((back, head))
            pending.append((jump, len(out)))


def structured_routine(rng, name="s", entry=0x1000, depth=3, max_statements=20):
    """Random single-exit structured routine.

    Returns ``(routine, n_predicates)`` where every predicate is a two-way
    conditional jump.
    """
    out, pending = [], []
    _emit(rng, _gen_stmts(rng, depth, [max_statements]), out, pending)
    out.append(["ret", []])
    for idx, target in pending:
        out[idx][1] = [("label", target)]
    n_pred = sum(1 for m, _ in out if m in JCC)
    return _assemble(name, entry, [tuple(x) for x in out], rng), n_pred


# ---------------------------------------------------------------------------
# evaluation corpora

def synthetic_listing(rng, module, n_routines, banned_rate=0.08):
    """A module of random routines with one planted vulnerable routine.

    The vulnerable routine calls banned functions and is sized from the
    upper half of the module's size distribution so that its Halstead
    volume lands above the median.
    """
    from .metrics import halstead

    def volume(r):
        return halstead(r)[1]["H.V"]

    sizes = [min(2000, max(3, int(rng.lognormvariate(3.0, 0.7)))) for _ in range(n_routines)]
    vuln_idx = rng.randrange(n_routines)
    median = sorted(sizes)[len(sizes) // 2]
    sizes[vuln_idx] = max(sizes[vuln_idx], median + rng.randint(2, 2 * median))

    names = [f"sub_{module}_{i:04d}" for i in range(n_routines)]

    def make(i, size):
        calls = SAFE_CALLS + tuple(names[j] for j in rng.sample(range(n_routines), min(3, n_routines)))
        if i == vuln_idx or rng.random() < banned_rate:
            calls = calls + BANNED_CALLS + DISCOURAGED_CALLS
        planted = [rng.choice(BANNED_CALLS) for _ in range(rng.randint(1, 3))] if i == vuln_idx else ()
        # one fixed 64 KiB window per routine keeps address ranges disjoint
        return random_routine(rng, size, names[i], 0x1000 + i * 0x10000, branch_rate=0.15,
                              calls=calls, planted=planted)

    routines = [make(i, size) for i, size in enumerate(sizes)]
    while True:
        vols = sorted(volume(r) for r in routines)
        if volume(routines[vuln_idx]) > vols[len(vols) // 2]:
            break
        sizes[vuln_idx] += median
        routines[vuln_idx] = make(vuln_idx, sizes[vuln_idx])
    return build_listing(module, routines), names[vuln_idx]


def synthetic_corpus(seed=0, n_listings=30, min_routines=30, max_routines=300):
    """``[(listing, vulnerable routine name), ...]`` for a scaled-down evaluation."""
    rng = random.Random(seed)
    return [synthetic_listing(rng, f"app{i:02d}", rng.randint(min_routines, max_routines))
            for i in range(n_listings)]


def write_corpus(corpus, directory):
    """Write listings, a corpus manifest and a ground-truth file; return their paths."""
    os.makedirs(directory, exist_ok=True)
    manifest = os.path.join(directory, "corpus.txt")
    truth = os.path.join(directory, "ground_truth.txt")
    with open(manifest, "w", encoding="utf-8") as mf, open(truth, "w", encoding="utf-8") as tf:
        for listing, vulnerable in corpus:
            fname = f"{listing.module_name}.lst"
            with open(os.path.join(directory, fname), "w", encoding="utf-8") as fh:
                fh.write(dumps_text(listing))
            mf.write(fname + "\n")
            tf.write(f"{listing.module_name} {vulnerable}\n")
    return manifest, truth
