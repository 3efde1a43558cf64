"""Control-flow graph utilities and dominators.

Dominators use the iterative reverse-postorder algorithm of Cooper, Harvey
and Kennedy.  Only blocks reachable from the entry appear in the result.
"""

from __future__ import annotations

from ..ir import Function


def reverse_postorder(f: Function) -> list[str]:
    blocks = f.block_map()
    seen: set[str] = set()
    order: list[str] = []
    stack = [(f.entry.label, iter(blocks[f.entry.label].successors()))]
    seen.add(f.entry.label)
    while stack:
        label, succs = stack[-1]
        for s in succs:
            if s not in seen and s in blocks:
                seen.add(s)
                stack.append((s, iter(blocks[s].successors())))
                break
        else:
            stack.pop()
            order.append(label)
    order.reverse()
    return order


def reachable(f: Function) -> set[str]:
    return set(reverse_postorder(f))


def dominator_tree(f: Function) -> dict[str, str]:
    """Immediate dominators; the entry maps to itself."""
    rpo = reverse_postorder(f)
    index = {b: k for k, b in enumerate(rpo)}
    preds = f.predecessors()
    entry = rpo[0]
    idom: dict[str, str] = {entry: entry}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for b in rpo[1:]:
            new = None
            for p in preds[b]:
                if p in idom:
                    new = p if new is None else intersect(p, new)
            if new is not None and idom.get(b) != new:
                idom[b] = new
                changed = True
    return idom


def dominates(idom: dict[str, str], a: str, b: str) -> bool:
    """True when ``a`` dominates ``b`` (reflexive)."""
    if b not in idom:
        return False
    while True:
        if a == b:
            return True
        parent = idom[b]
        if parent == b:
            return False
        b = parent


class DomTree:
    def __init__(self, f: Function):
        self.idom = dominator_tree(f)

    def dominates(self, a: str, b: str) -> bool:
        return dominates(self.idom, a, b)

    def strictly_dominates(self, a: str, b: str) -> bool:
        return a != b and self.dominates(a, b)

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {b: [] for b in self.idom}
        for b, p in self.idom.items():
            if b != p:
                out[p].append(b)
        return out


def dominators(f: Function) -> DomTree:
    return DomTree(f)
