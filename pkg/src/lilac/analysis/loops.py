"""Natural loops, loop nests and canonical induction variables.

A loop is canonical when it has a single latch, a preheader ending in an
unconditional branch, and a single exit taken from the header on
``condbr (icmp.slt %iv, %upper), body, exit`` where ``%iv`` is a header phi
starting at the preheader value and stepping by ``+1`` on the latch edge and
``%upper`` is loop invariant.  Only canonical loops are match candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import Diagnostic, NonCanonicalLoop
from ..ir import Function, Lit, Var
from .cfg import DomTree, reverse_postorder


@dataclass(eq=False)
class LoopInfo:
    header: str
    blocks: tuple
    latches: tuple = ()
    preheader: str | None = None
    exit: str | None = None
    iterator: str | None = None
    lower: object = None
    upper: object = None
    compare: str | None = None
    step: str | None = None
    canonical: bool = False
    reason: str = ""
    children: list = field(default_factory=list)
    parent: "LoopInfo | None" = None

    @property
    def latch(self) -> str | None:
        return self.latches[0] if len(self.latches) == 1 else None

    @property
    def depth(self) -> int:
        d, p = 1, self.parent
        while p is not None:
            d, p = d + 1, p.parent
        return d

    def contains(self, label: str) -> bool:
        return label in self.blocks

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def __repr__(self) -> str:
        state = "canonical" if self.canonical else f"non-canonical: {self.reason}"
        return f"<LoopInfo {self.header} depth={self.depth} {state}>"


@dataclass
class LoopNest:
    """Loops of one function organised as a containment forest."""

    function: str
    roots: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def loop(self, header: str) -> LoopInfo:
        for l in self.loops:
            if l.header == header:
                return l
        raise KeyError(header)

    def innermost_containing(self, label: str) -> LoopInfo | None:
        best = None
        for l in self.loops:
            if label in l.blocks and (best is None or len(l.blocks) < len(best.blocks)):
                best = l
        return best

    def depth(self) -> int:
        return max((l.depth for l in self.loops), default=0)


def is_invariant(f: Function, operand, blocks, defs=None) -> bool:
    if isinstance(operand, Lit):
        return True
    defs = f.definitions() if defs is None else defs
    if operand.name not in defs:
        return operand.name in f.param_types()
    return defs[operand.name][0] not in blocks


def _increment_of(ins, iv: str) -> bool:
    if ins is None or ins.opcode != "add":
        return False
    a, b = ins.args
    one = Lit("i64", 1)
    return (a == Var(iv) and b == one) or (b == Var(iv) and a == one)


def analyze_loop(f: Function, loop: LoopInfo, preds: dict, defs: dict) -> None:
    body = set(loop.blocks)
    header = f.block(loop.header)
    loop.latches = tuple(p for p in preds[loop.header] if p in body)
    outside = [p for p in preds[loop.header] if p not in body]
    if len(outside) == 1:
        t = f.block(outside[0]).terminator
        if t is not None and t.opcode == "br":
            loop.preheader = outside[0]
    exits = []
    for lab in loop.blocks:
        for s in f.block(lab).successors():
            if s not in body:
                exits.append((lab, s))
    if exits and all(src == loop.header for src, _ in exits) and len(exits) == 1:
        loop.exit = exits[0][1]

    def fail(reason: str) -> None:
        loop.canonical = False
        loop.reason = reason

    if len(loop.latches) != 1:
        return fail("MultipleLatches")
    if loop.preheader is None:
        return fail("NoPreheader")
    if len(exits) != 1:
        return fail("MultipleExits" if exits else "NoExit")
    if exits[0][0] != loop.header:
        return fail("ExitNotInHeader")
    term = header.terminator
    if term.opcode != "condbr" or term.labels[0] not in body or term.labels[1] in body:
        return fail("NonCanonicalExit")
    cond = term.args[0]
    if not isinstance(cond, Var) or cond.name not in defs or defs[cond.name][0] != loop.header:
        return fail("NonCanonicalExit")
    cmp = defs[cond.name][1]
    if cmp.opcode != "icmp.slt":
        return fail(f"NonCanonicalCompare({cmp.opcode})")
    iv, upper = cmp.args
    phis = {p.result: p for p in header.phis}
    if not isinstance(iv, Var) or iv.name not in phis:
        return fail("NonCanonicalIterator")
    phi = phis[iv.name]
    incoming = dict(zip(phi.labels, phi.args))
    nxt = incoming.get(loop.latch)
    lower = incoming.get(loop.preheader)
    if not isinstance(nxt, Var) or nxt.name not in defs or defs[nxt.name][0] not in body:
        return fail("NonCanonicalIterator")
    if not _increment_of(defs[nxt.name][1], iv.name):
        return fail("NonCanonicalStep")
    if not is_invariant(f, upper, body, defs):
        return fail("VariantBound")
    loop.iterator = iv.name
    loop.lower = lower
    loop.upper = upper
    loop.compare = cond.name
    loop.step = nxt.name
    loop.canonical = True
    loop.reason = ""


def find_loops(f: Function) -> LoopNest:
    """Natural loops of ``f`` with canonical-form analysis.

    Irreducible control flow is reported as a diagnostic; the cycles involved
    are not loops.
    """
    nest = LoopNest(f.name)
    dom = DomTree(f)
    order = reverse_postorder(f)
    live = set(order)
    preds = f.predecessors()
    blocks = f.block_map()

    # retreating edges from a DFS; those whose target does not dominate the
    # source make the region irreducible
    on_stack: set[str] = set()
    done: set[str] = set()
    back: dict[str, list[str]] = {}
    stack = [(f.entry.label, iter(blocks[f.entry.label].successors()))]
    on_stack.add(f.entry.label)
    while stack:
        label, succs = stack[-1]
        advanced = False
        for s in succs:
            if s in on_stack:
                if dom.dominates(s, label):
                    back.setdefault(s, []).append(label)
                else:
                    nest.diagnostics.append(
                        Diagnostic("IrreducibleRegion", f"edge {label}->{s} enters a cycle at a non-header", f.name)
                    )
            elif s not in done and s in blocks:
                on_stack.add(s)
                stack.append((s, iter(blocks[s].successors())))
                advanced = True
                break
        if not advanced:
            stack.pop()
            on_stack.discard(label)
            done.add(label)

    # back edges can also target a header that is not on the DFS stack
    for b in order:
        for s in blocks[b].successors():
            if dom.dominates(s, b) and b not in back.get(s, []):
                back.setdefault(s, []).append(b)

    position = {b.label: k for k, b in enumerate(f.blocks)}
    defs = f.definitions()
    for header in sorted(back, key=position.__getitem__):
        body = {header}
        work = [t for t in back[header] if t in live]
        while work:
            b = work.pop()
            if b in body:
                continue
            body.add(b)
            work.extend(p for p in preds[b] if p in live)
        loop = LoopInfo(header, tuple(sorted(body, key=position.__getitem__)))
        analyze_loop(f, loop, preds, defs)
        nest.loops.append(loop)
        if not loop.canonical:
            nest.diagnostics.append(Diagnostic(loop.reason, f"loop at {header} excluded", f.name))

    for loop in nest.loops:
        parent = None
        for other in nest.loops:
            if other is loop or loop.header not in other.blocks:
                continue
            if parent is None or len(other.blocks) < len(parent.blocks):
                parent = other
        loop.parent = parent
        if parent is None:
            nest.roots.append(loop)
        else:
            parent.children.append(loop)
    return nest


def loop_bounds(loop: LoopInfo) -> tuple:
    """``(lower, upper)`` operands of a canonical loop."""
    if not loop.canonical:
        raise NonCanonicalLoop(f"loop at {loop.header}: {loop.reason}")
    return loop.lower, loop.upper
