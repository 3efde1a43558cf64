"""Detection of What computations in IR loop nests.

Detection has two phases.  The control-flow skeleton of a computation (the
number of ``forall`` loops plus one reduction loop) selects candidate loop
nests.  A backtracking search then assigns every expression of the
computation to an IR value.  Iterators, range bounds and the reduction phi
come straight from loop analysis; everything else is searched in a fixed
order: ranges outermost first, then the left operand, the right operand,
the product and finally the target.

Each search step is logged.  ``Assign`` and ``Fail`` events carry a step
number, ``Backtrack(to=k)`` reopens the choice made at step ``k``.
Replaying the log (push on assign, drop entries numbered ``>= k`` on
backtrack) rebuilds the final assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .analysis.loops import LoopInfo, find_loops
from .analysis.normalize import normalize
from .errors import BudgetExceeded, Diagnostic
from .interp import wrap_i64
from .ir import F64, I64, PTR_F64, PTR_I64, Function, Lit, Module, Var, infer_types
from .what import Add, Addr, Const, DotOp, Mul, Name, Range, WhatProgram, format_expr

DEFAULT_BUDGET = 10_000


# ---------------------------------------------------------------- DSL side


def fold_expr(e):
    """Constant-fold an index expression the same way IR folding does."""
    if isinstance(e, Addr):
        return Addr(e.base, tuple(fold_expr(i) for i in e.indices))
    if not isinstance(e, (Add, Mul)):
        return e
    l, r = fold_expr(e.left), fold_expr(e.right)
    if isinstance(l, Const) and isinstance(r, Const):
        v = l.value + r.value if isinstance(e, Add) else l.value * r.value
        return Const(wrap_i64(v))
    if isinstance(l, Const):
        l, r = r, l
    if isinstance(r, Const):
        if isinstance(e, Add):
            if r.value == 0:
                return l
            if isinstance(l, Add) and isinstance(l.right, Const):
                return fold_expr(Add(l.left, Const(l.right.value + r.value)))
        else:
            if r.value == 1:
                return l
            if r.value == 0:
                return Const(0)
    return type(e)(l, r)


@dataclass
class Node:
    path: str
    kind: str  # iterator, bound, addr, base, name, itervar, const, add, mul, product, reduction, target
    label: str
    expr: object = None
    role: str = ""  # element type for addr/base: "f64", "i64" or "out"
    children: list = field(default_factory=list)
    parent: "Node | None" = None


def _build(expr, path: str, role: str, iterators: set) -> Node:
    label = format_expr(expr)
    if isinstance(expr, Addr):
        n = Node(path, "addr", label, expr, role)
        base = Node(path + ".base", "base", expr.base, Name(expr.base), role)
        n.children = [base, _build(expr.index, path + ".index", "i64", iterators)]
    elif isinstance(expr, Name):
        n = Node(path, "itervar" if expr.id in iterators else "name", label, expr)
    elif isinstance(expr, Const):
        n = Node(path, "const", label, expr)
    else:
        kind = "add" if isinstance(expr, Add) else "mul"
        n = Node(path, kind, label, expr)
        n.children = [
            _build(expr.left, path + ".left", "i64", iterators),
            _build(expr.right, path + ".right", "i64", iterators),
        ]
    for c in n.children:
        c.parent = n
    return n


def _preorder(n: Node):
    yield n
    for c in n.children:
        yield from _preorder(c)


@dataclass(frozen=True)
class Skeleton:
    forall_depth: int
    reduction: bool = True

    @property
    def depth(self) -> int:
        return self.forall_depth + 1


def skeleton_of(p: WhatProgram) -> Skeleton:
    return Skeleton(len(p.foralls))


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class Assign:
    step: int
    node: str
    label: str
    value: str


@dataclass(frozen=True)
class Fail:
    step: int
    node: str
    label: str


@dataclass(frozen=True)
class Backtrack:
    to: int


@dataclass(frozen=True)
class Seed:
    node: str
    label: str
    value: str


@dataclass
class SearchTrace:
    seeds: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def replay(self) -> dict:
        """Node path -> IR value text, rebuilt from the events alone."""
        stack: list[Assign] = []
        for ev in self.events:
            if isinstance(ev, Assign):
                stack.append(ev)
            elif isinstance(ev, Backtrack):
                stack = [a for a in stack if a.step < ev.to]
        out = {s.node: s.value for s in self.seeds}
        out.update({a.node: a.value for a in stack})
        return out

    def format(self) -> str:
        lines = [f"seed {s.label} <- {s.value}" for s in self.seeds]
        for ev in self.events:
            if isinstance(ev, Assign):
                lines.append(f"{ev.step}: {ev.label} <- {ev.value}")
            elif isinstance(ev, Fail):
                lines.append(f"{ev.step}: {ev.label} <- fail!")
            else:
                lines.append(f"backtrack to {ev.to}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        evs = []
        for ev in self.events:
            if isinstance(ev, Assign):
                evs.append({"event": "assign", "step": ev.step, "node": ev.label, "value": ev.value})
            elif isinstance(ev, Fail):
                evs.append({"event": "fail", "step": ev.step, "node": ev.label})
            else:
                evs.append({"event": "backtrack", "to": ev.to})
        return {
            "seeds": [{"node": s.label, "value": s.value} for s in self.seeds],
            "events": evs,
        }


@dataclass
class Solution:
    nodes: dict  # node path -> IR operand
    names: dict  # free variable -> IR operand
    iterators: dict  # iterator -> phi name
    reduction: str
    target_kind: str  # "store" (indexed or scalar pointer) or "live-out"
    target_pointer: object = None  # pointer operand the result is stored through


@dataclass
class Candidate:
    function: str
    loops: list  # LoopInfo, outermost first
    reduction: str
    addend: object  # the value added to the reduction each iteration

    @property
    def headers(self) -> list:
        return [l.header for l in self.loops]

    @property
    def blocks(self) -> tuple:
        return self.loops[0].blocks


@dataclass
class Match:
    what: str
    function: str
    headers: list
    solution: Solution
    trace: SearchTrace
    module: Module = field(repr=False, default=None)

    @property
    def header(self) -> str:
        return self.headers[0]

    def to_json(self, trace: bool = False) -> dict:
        rec = {
            "what": self.what,
            "function": self.function,
            "header_block": self.header,
            "bindings": {k: str(v) for k, v in self.solution.names.items()},
            "iterators": {k: "%" + v for k, v in self.solution.iterators.items()},
        }
        if trace:
            rec["trace"] = self.trace.to_json()
        return rec


class NoMatch(Exception):
    """Raised internally when a candidate has no complete assignment."""


# ---------------------------------------------------------------- candidates


def _reduction_phis(f: Function, loop: LoopInfo, defs: dict) -> list:
    out = []
    zero = Lit(F64, 0.0)
    for phi in f.block(loop.header).phis:
        if phi.result == loop.iterator:
            continue
        inc = dict(zip(phi.labels, phi.args))
        if inc.get(loop.preheader) != zero or len(inc) != 2:
            continue
        nxt = inc.get(loop.latch)
        if not isinstance(nxt, Var) or nxt.name not in defs:
            continue
        lab, ins = defs[nxt.name]
        if lab not in loop.blocks or ins.opcode != "fadd":
            continue
        a, b = ins.args
        me = Var(phi.result)
        if a == me and b != me:
            out.append((phi.result, b))
        elif b == me and a != me:
            out.append((phi.result, a))
    return out


def candidates(m: Module, s: Skeleton) -> list[Candidate]:
    """Canonical nests of the skeleton's depth with a reduction in the innermost loop."""
    out = []
    for f in m.functions:
        nest = find_loops(f)
        defs = f.definitions()
        for top in nest.loops:
            chain = [top]
            while len(chain) < s.depth and len(chain[-1].children) == 1:
                chain.append(chain[-1].children[0])
            if len(chain) != s.depth or chain[-1].children:
                continue
            if not all(l.canonical for l in chain):
                continue
            for phi, addend in _reduction_phis(f, chain[-1], defs):
                out.append(Candidate(f.name, chain, phi, addend))
    return out


# ---------------------------------------------------------------- search


class _Search:
    def __init__(self, m: Module, cand: Candidate, p: WhatProgram, budget: int):
        self.f = m.function(cand.function)
        self.cand = cand
        self.p = p
        self.budget = budget
        self.defs = self.f.definitions()
        self.types = infer_types(self.f, m)
        self.nest = set(cand.blocks)
        self.trace = SearchTrace()
        self.step = 0
        self.nodes: dict[str, object] = {}
        self.names: dict[str, object] = {}
        self.forced: dict[str, object] = {}
        self.iter_values: dict[str, Var] = {}
        self.target_info = None
        self._order = {}
        k = 0
        for b in self.f.blocks:
            for ins in b.instrs:
                self._order[id(ins)] = k
                k += 1

    # -- IR helpers

    def _def(self, v):
        if isinstance(v, Var) and v.name in self.defs:
            return self.defs[v.name][1]
        return None

    def _type(self, v):
        return v.type if isinstance(v, Lit) else self.types.get(v.name)

    def _invariant(self, v) -> bool:
        if isinstance(v, Lit):
            return True
        d = self.defs.get(v.name)
        return d is None or d[0] not in self.nest

    def _nest_instrs(self):
        for b in self.f.blocks:
            if b.label in self.nest:
                for ins in b.instrs:
                    yield b.label, ins

    def _decompose_addr(self, v, role):
        """``(base, index)`` when ``v`` is ``load (elemptr base, index)``."""
        ins = self._def(v)
        if ins is None or ins.opcode != "load":
            return None
        want = I64 if role == "i64" else F64
        if self._type(v) != want:
            return None
        ptr = self._def(ins.args[0])
        if ptr is None or ptr.opcode != "elemptr":
            return None
        return ptr.args[0], ptr.args[1]

    # -- tracing

    def _tick(self) -> int:
        self.step += 1
        if self.step > self.budget:
            raise BudgetExceeded(f"search budget of {self.budget} steps exceeded")
        return self.step

    # -- nodes

    def build(self):
        p = self.p
        iterators = set(p.iterators)
        ranges: list[Range] = [fa.range for fa in p.foralls] + [p.dot.range]
        self.seeds: list = []
        slots: list[Node] = []
        for k, (r, loop) in enumerate(zip(ranges, self.cand.loops)):
            it = Node(f"range{k}.iterator", "iterator", r.iterator)
            self.iter_values[r.iterator] = Var(loop.iterator)
            self.seeds.append((it, Var(loop.iterator)))
            for which, expr, val in (("lower", r.lower, loop.lower), ("upper", r.upper, loop.upper)):
                root = _build(fold_expr(expr), f"range{k}.{which}", "i64", iterators)
                if root.kind in ("add", "mul"):
                    self.forced[root.path] = val
                    slots.extend(_preorder(root))
                else:
                    self.seeds.append((root, val))
                    slots.extend(list(_preorder(root))[1:])
        d: DotOp = p.dot
        lhs = _build(fold_expr(d.lhs), "dot.lhs", "f64", iterators)
        rhs = _build(fold_expr(d.rhs), "dot.rhs", "f64", iterators)
        product = Node("dot.product", "product", f"{lhs.label} * {rhs.label}")
        product.children = [lhs, rhs]
        red = Node("dot.reduction", "reduction", "dot")
        self.seeds.append((red, Var(self.cand.reduction)))
        tgt_expr = fold_expr(d.target)
        if tgt_expr.indices:
            target = _build(tgt_expr, "dot.target", "out", iterators)
            target.kind = "target"
        else:
            target = Node("dot.target", "scalar-target", d.target.base, tgt_expr, "out")
        slots.extend(_preorder(lhs))
        slots.extend(_preorder(rhs))
        slots.append(product)
        slots.extend(_preorder(target))
        self.lhs, self.rhs = lhs, rhs
        self.slots = slots

    def _seed(self) -> bool:
        for node, val in self.seeds:
            self.trace.seeds.append(Seed(node.path, node.label, str(val)))
            if node.kind in ("iterator", "reduction"):
                self.nodes[node.path] = val
                continue
            cands = self._candidates(node, val)
            if not cands or not self._accept(node, cands[0][0]):
                self.trace.events.append(Fail(self._tick(), node.path, node.label))
                return False
            value, children = cands[0]
            self._apply(node, value, children)
        return True

    def _candidates(self, node: Node, forced=None) -> list:
        """Ordered ``(value, child values)`` options for ``node``."""
        k = node.kind
        v = forced if forced is not None else self.forced.get(node.path)
        if k in ("itervar", "const", "name", "base"):
            return [] if v is None else [(v, ())]
        if k == "addr":
            if v is not None:
                values = [v]
            else:
                values = [
                    Var(ins.result)
                    for _, ins in self._nest_instrs()
                    if ins.opcode == "load" and self._type(Var(ins.result)) == F64
                ]
            out = []
            for val in values:
                parts = self._decompose_addr(val, node.role)
                if parts is not None:
                    out.append((val, parts))
            return out
        if k in ("add", "mul"):
            ins = self._def(v)
            if ins is None or ins.opcode != k:
                return []
            x, y = ins.args
            return [(v, (x, y))] if x == y else [(v, (x, y)), (v, (y, x))]
        if k == "product":
            lv = self.nodes.get(self.lhs.path)
            rv = self.nodes.get(self.rhs.path)
            ins = self._def(self.cand.addend)
            if ins is None or ins.opcode != "fmul":
                return []
            if ins.args in ([lv, rv], [rv, lv]):
                return [(self.cand.addend, ())]
            return []
        if k in ("target", "scalar-target"):
            return self._target_candidates(node)
        raise AssertionError(k)

    def _target_candidates(self, node: Node) -> list:
        red = Var(self.cand.reduction)
        inner = self.cand.loops[-1]
        out = []
        exit_block = self.f.block(inner.exit)
        for ins in exit_block.instrs:
            if ins.opcode != "store" or ins.args[0] != red:
                continue
            ptr = ins.args[1]
            pdef = self._def(ptr)
            if node.kind == "target":
                if pdef is not None and pdef.opcode == "elemptr":
                    out.append((ptr, (pdef.args[0], pdef.args[1])))
            elif pdef is None or pdef.opcode != "elemptr":
                out.append((ptr, ()))
        if node.kind == "scalar-target" and len(self.cand.loops) == 1:
            outside = [
                ins
                for b in self.f.blocks
                if b.label not in self.nest
                for ins in b.instrs
                if red in ins.args and not (ins.opcode == "store" and ins.args[0] == red)
            ]
            if outside:
                out.append((red, ()))
        return out

    def _accept(self, node: Node, v) -> bool:
        k = node.kind
        if k == "itervar":
            return v == self.iter_values[node.expr.id]
        if k == "const":
            return v == Lit(I64, node.expr.value)
        if k in ("name", "base", "scalar-target"):
            name = node.expr.id if k != "scalar-target" else node.expr.base
            if k == "name":
                ok_type = self._type(v) == I64
            elif k == "scalar-target" and v == Var(self.cand.reduction):
                ok_type = True
            else:
                want = PTR_I64 if node.role == "i64" else PTR_F64
                ok_type = self._type(v) == want
            if not ok_type:
                return False
            if not (k == "scalar-target" and v == Var(self.cand.reduction)) and not self._invariant(v):
                return False
            return self.names.get(name, v) == v
        return True

    def _apply(self, node: Node, value, children) -> list:
        """Record an assignment; return undo information."""
        undo = [("node", node.path)]
        self.nodes[node.path] = value
        if node.kind in ("name", "base", "scalar-target"):
            name = node.expr.id if node.kind != "scalar-target" else node.expr.base
            if name not in self.names:
                self.names[name] = value
                undo.append(("name", name))
        for child, cv in zip(node.children, children):
            self.forced[child.path] = cv
            undo.append(("forced", child.path))
        return undo

    def _undo(self, undo: list) -> None:
        for what, key in undo:
            if what == "node":
                self.nodes.pop(key, None)
            elif what == "name":
                self.names.pop(key, None)
            else:
                self.forced.pop(key, None)

    def _first_acceptable(self, node: Node, cands: list, start: int):
        for idx in range(start, len(cands)):
            if self._accept(node, cands[idx][0]):
                return idx
        return None

    def run(self) -> Solution:
        self.build()
        if not self._seed():
            raise NoMatch()
        silent = ("itervar", "const")
        frames = []  # (slot index, candidates, chosen index, step, undo)
        k = 0
        while k < len(self.slots):
            node = self.slots[k]
            cands = self._candidates(node)
            idx = self._first_acceptable(node, cands, 0)
            if idx is not None:
                step = None
                if node.kind not in silent:
                    step = self._tick()
                    self.trace.events.append(Assign(step, node.path, node.label, str(cands[idx][0])))
                frames.append((k, cands, idx, step, self._apply(node, *cands[idx])))
                k += 1
                continue
            self.trace.events.append(Fail(self._tick(), node.path, node.label))
            while frames:
                fk, fc, fi, fstep, fundo = frames.pop()
                self._undo(fundo)
                fnode = self.slots[fk]
                nxt = self._first_acceptable(fnode, fc, fi + 1)
                if nxt is None:
                    continue
                self.trace.events.append(Backtrack(fstep))
                step = self._tick()
                self.trace.events.append(Assign(step, fnode.path, fnode.label, str(fc[nxt][0])))
                frames.append((fk, fc, nxt, step, self._apply(fnode, *fc[nxt])))
                k = fk + 1
                break
            else:
                raise NoMatch()
        tval = self.nodes["dot.target"]
        if tval == Var(self.cand.reduction):
            kind, ptr = "live-out", None
        else:
            kind, ptr = "store", tval
        names = {n: self.names[n] for n in self.p.free_variables()}
        return Solution(
            nodes=dict(self.nodes),
            names=names,
            iterators={name: v.name for name, v in self.iter_values.items()},
            reduction=self.cand.reduction,
            target_kind=kind,
            target_pointer=ptr,
        )


def solve(m: Module, cand: Candidate, p: WhatProgram, budget: int = DEFAULT_BUDGET):
    """``(Solution or None, SearchTrace)`` for one candidate."""
    s = _Search(m, cand, p, budget)
    try:
        return s.run(), s.trace
    except NoMatch:
        return None, s.trace


@dataclass
class DetectResult:
    matches: list
    diagnostics: list
    module: Module


def detect_with_diagnostics(
    m: Module, p: WhatProgram, budget: int = DEFAULT_BUDGET, normalized: bool = False
) -> DetectResult:
    nm = m if normalized else normalize(m)
    out = []
    diags = []
    for cand in candidates(nm, skeleton_of(p)):
        try:
            sol, trace = solve(nm, cand, p, budget)
        except BudgetExceeded as e:
            diags.append(Diagnostic("BudgetExceeded", str(e), f"{cand.function}:{cand.headers[0]}"))
            continue
        if sol is not None:
            out.append(Match(p.name, cand.function, cand.headers, sol, trace, nm))
    return DetectResult(out, diags, nm)


def detect(m: Module, p: WhatProgram, budget: int = DEFAULT_BUDGET) -> list[Match]:
    """All matches of ``p`` in ``m`` after normalization, in function and block order."""
    return detect_with_diagnostics(m, p, budget).matches
