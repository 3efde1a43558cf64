"""Normalization passes run before detection.

Optimizing compilers hand the matcher loops in a handful of shapes.  These
passes bring the common variants into one canonical form:

* unreachable blocks and constant conditions are folded away,
* integer arithmetic is folded and put in ``add x, c`` form,
* every loop gets a preheader ending in ``br header``,
* ``icmp.sle`` exit tests become ``icmp.slt`` against ``upper + 1``,
* loop-invariant integer arithmetic is hoisted to the preheader,
* duplicate induction variables are merged,
* countdown trip counters are replaced by a test on an up-counting iterator,
* iterators that start at ``X + k`` and are used as ``iv - k`` are rebased to ``X``,
* dead code, including stores into never-read scratch buffers, is removed.

All passes are run in order until the printed function stops changing.
"""

from __future__ import annotations

from ..interp import wrap_i64
from ..ir import (
    ALLOC_BUILTINS,
    F64,
    I1,
    I64,
    INT_BINOPS,
    Block,
    Function,
    Instr,
    Lit,
    Module,
    Var,
    print_function,
)
from .cfg import reachable
from .loops import LoopInfo, find_loops, is_invariant

MAX_ROUNDS = 64
_I64_MAX = (1 << 63) - 1
_I64_MIN = -(1 << 63)


def normalize(m: Module) -> Module:
    """Return a normalized copy of ``m``; the input is left untouched."""
    out = m.copy()
    for f in out.functions:
        normalize_function(f)
    return out


def normalize_function(f: Function) -> Function:
    for _ in range(MAX_ROUNDS):
        before = print_function(f)
        for p in PASSES:
            p(f)
        if print_function(f) == before:
            break
    return f


# ---------------------------------------------------------------- helpers


def _is_int_lit(a) -> bool:
    return isinstance(a, Lit) and a.type == I64


def _replace_value(f: Function, name: str, new) -> None:
    f.replace_uses(Var(name), new)


def _remove_instr(f: Function, target: Instr) -> None:
    for b in f.blocks:
        for k, ins in enumerate(b.instrs):
            if ins is target:
                del b.instrs[k]
                return


def _drop_phi_entries(block: Block, pred: str) -> None:
    for phi in block.phis:
        keep = [(a, l) for a, l in zip(phi.args, phi.labels) if l != pred]
        phi.args = [a for a, _ in keep]
        phi.labels = [l for _, l in keep]


def _insert_before_terminator(block: Block, ins: Instr) -> None:
    block.instrs.insert(len(block.instrs) - 1, ins)


def linear_form(f: Function, operand, defs: dict | None = None) -> dict:
    """Expand ``operand`` into ``{atom: coefficient}``; key None is the constant."""
    defs = f.definitions() if defs is None else defs
    if _is_int_lit(operand):
        return {None: operand.value}
    if isinstance(operand, Var) and operand.name in defs:
        ins = defs[operand.name][1]
        if ins.opcode in ("add", "sub"):
            a = linear_form(f, ins.args[0], defs)
            b = linear_form(f, ins.args[1], defs)
            sign = 1 if ins.opcode == "add" else -1
            for k, v in b.items():
                a[k] = a.get(k, 0) + sign * v
            return {k: v for k, v in a.items() if v != 0}
        if ins.opcode == "mul":
            a = linear_form(f, ins.args[0], defs)
            b = linear_form(f, ins.args[1], defs)
            for x, y in ((a, b), (b, a)):
                if set(y) <= {None}:
                    c = y.get(None, 0)
                    return {k: v * c for k, v in x.items() if v * c != 0}
    return {operand: 1}


def _combine(*parts) -> dict:
    out: dict = {}
    for sign, lin in parts:
        for k, v in lin.items():
            out[k] = out.get(k, 0) + sign * v
    return {k: v for k, v in out.items() if v != 0}


def materialize(f: Function, block: Block, lin: dict, hint: str = "t"):
    """Emit instructions computing ``lin`` before ``block``'s terminator."""
    taken = f.value_names()
    terms = [(k, v) for k, v in lin.items() if k is not None and v != 0]
    terms.sort(key=lambda t: t[1] < 0)
    const = wrap_i64(lin.get(None, 0))

    def emit(op, a, b):
        name = f.fresh_name(hint, taken)
        _insert_before_terminator(block, Instr(op, [a, b], name))
        return Var(name)

    acc = None
    for atom, c in terms:
        if acc is None:
            acc = atom if c == 1 else emit("mul", atom, Lit(I64, wrap_i64(c)))
        elif c == 1:
            acc = emit("add", acc, atom)
        elif c == -1:
            acc = emit("sub", acc, atom)
        else:
            acc = emit("add", acc, emit("mul", atom, Lit(I64, wrap_i64(c))))
    if acc is None:
        return Lit(I64, const)
    if const:
        acc = emit("add", acc, Lit(I64, const))
    return acc


def _loop_phi_step(f: Function, loop: LoopInfo, phi: Instr, defs: dict):
    """``(init, step constant)`` when ``phi`` advances by ``add phi, c``."""
    inc = dict(zip(phi.labels, phi.args))
    if loop.preheader not in inc or loop.latch not in inc or len(inc) != 2:
        return None
    nxt = inc[loop.latch]
    if not isinstance(nxt, Var) or nxt.name not in defs:
        return None
    lab, ins = defs[nxt.name]
    if lab not in loop.blocks or ins.opcode != "add":
        return None
    if ins.args[0] == Var(phi.result) and _is_int_lit(ins.args[1]):
        return inc[loop.preheader], ins.args[1].value, ins
    return None


# ---------------------------------------------------------------- passes


def remove_unreachable(f: Function) -> bool:
    live = reachable(f)
    changed = len(live) != len(f.blocks)
    f.blocks = [b for b in f.blocks if b.label in live]
    preds = f.predecessors()
    for b in f.blocks:
        for phi in b.phis:
            if any(l not in preds[b.label] for l in phi.labels):
                keep = [(a, l) for a, l in zip(phi.args, phi.labels) if l in preds[b.label]]
                phi.args = [a for a, _ in keep]
                phi.labels = [l for _, l in keep]
                changed = True
    return changed


def merge_blocks(f: Function) -> bool:
    """Fold a block into its predecessor when that edge is the only way in and out."""
    changed = False
    while True:
        preds = f.predecessors()
        for a in f.blocks:
            term = a.terminator
            if term is None or term.opcode != "br":
                continue
            target = term.labels[0]
            if target == a.label or target == f.blocks[0].label or preds[target] != [a.label]:
                continue
            b = f.block(target)
            for phi in b.phis:
                _replace_value(f, phi.result, phi.args[0])
            a.instrs = a.instrs[:-1] + [i for i in b.instrs if i.opcode != "phi"]
            f.blocks = [x for x in f.blocks if x is not b]
            for succ in f.blocks:
                for phi in succ.phis:
                    phi.labels = [a.label if l == b.label else l for l in phi.labels]
            changed = True
            break
        else:
            return changed


def _simplify(ins: Instr, defs: dict):
    """Return ``(replacement, mutated)`` for one instruction."""
    op = ins.opcode
    a = ins.args
    if op in INT_BINOPS:
        x, y = a
        if _is_int_lit(x) and _is_int_lit(y):
            v = {"add": x.value + y.value, "sub": x.value - y.value, "mul": x.value * y.value}[op]
            return Lit(I64, wrap_i64(v)), False
        if op == "sub" and _is_int_lit(y):
            ins.opcode = "add"
            ins.args = [x, Lit(I64, wrap_i64(-y.value))]
            return None, True
        if op in ("add", "mul") and _is_int_lit(x) and not _is_int_lit(y):
            ins.args = [y, x]
            return None, True
        if op == "sub" and x == y:
            return Lit(I64, 0), False
        if _is_int_lit(y):
            if op == "add" and y.value == 0:
                return x, False
            if op == "mul" and y.value == 1:
                return x, False
            if op == "mul" and y.value == 0:
                return Lit(I64, 0), False
            if op == "add" and isinstance(x, Var) and x.name in defs:
                inner = defs[x.name][1]
                if inner.opcode == "add" and _is_int_lit(inner.args[1]):
                    ins.args = [inner.args[0], Lit(I64, wrap_i64(inner.args[1].value + y.value))]
                    return None, True
        return None, False
    if op in ("fadd", "fsub", "fmul"):
        x, y = a
        if isinstance(x, Lit) and isinstance(y, Lit) and x.type == F64 and y.type == F64:
            v = {"fadd": x.value + y.value, "fsub": x.value - y.value, "fmul": x.value * y.value}[op]
            return Lit(F64, v), False
        return None, False
    if op.startswith("icmp."):
        x, y = a
        pred = op[5:]
        if _is_int_lit(x) and _is_int_lit(y):
            r = {
                "eq": x.value == y.value,
                "ne": x.value != y.value,
                "slt": x.value < y.value,
                "sle": x.value <= y.value,
            }[pred]
            return Lit(I1, r), False
        if x == y:
            return Lit(I1, pred in ("eq", "sle")), False
        return None, False
    if op == "phi":
        others = {v for v in a if v != Var(ins.result)}
        if len(others) == 1:
            return next(iter(others)), False
    return None, False


def fold_constants(f: Function) -> bool:
    changed = False
    progress = True
    while progress:
        progress = False
        defs = f.definitions()
        for b in f.blocks:
            for ins in list(b.instrs):
                if ins.opcode == "condbr":
                    c = ins.args[0]
                    keep = None
                    if isinstance(c, Lit):
                        keep = ins.labels[0] if c.value else ins.labels[1]
                    elif ins.labels[0] == ins.labels[1]:
                        keep = ins.labels[0]
                    if keep is not None:
                        for lab in set(ins.labels) - {keep}:
                            _drop_phi_entries(f.block(lab), b.label)
                        ins.opcode, ins.args, ins.labels = "br", [], [keep]
                        progress = True
                    continue
                if ins.result is None:
                    continue
                rep, mutated = _simplify(ins, defs)
                if rep is not None:
                    b.instrs.remove(ins)
                    _replace_value(f, ins.result, rep)
                    progress = True
                    break
                if mutated:
                    progress = True
            if progress:
                break
        changed |= progress
    return changed


def insert_preheaders(f: Function) -> bool:
    changed = False
    while True:
        nest = find_loops(f)
        preds = f.predecessors()
        todo = None
        for loop in nest.loops:
            outside = [p for p in preds[loop.header] if p not in loop.blocks]
            if not outside:
                continue
            if len(outside) == 1 and f.block(outside[0]).terminator.opcode == "br":
                continue
            todo = (loop, outside)
            break
        if todo is None:
            return changed
        loop, outside = todo
        header = f.block(loop.header)
        label = f.fresh_label(loop.header + ".ph")
        pre = Block(label, [])
        taken = f.value_names()
        for phi in header.phis:
            out_in = [(a, l) for a, l in zip(phi.args, phi.labels) if l in outside]
            in_in = [(a, l) for a, l in zip(phi.args, phi.labels) if l not in outside]
            if len({a for a, _ in out_in}) == 1:
                v = out_in[0][0]
            else:
                name = f.fresh_name(phi.result + ".ph", taken)
                pre.instrs.append(Instr("phi", [a for a, _ in out_in], name, [l for _, l in out_in]))
                v = Var(name)
            phi.args = [v] + [a for a, _ in in_in]
            phi.labels = [label] + [l for _, l in in_in]
        pre.instrs.append(Instr("br", [], None, [loop.header]))
        for p in outside:
            t = f.block(p).terminator
            t.labels = [label if l == loop.header else l for l in t.labels]
        f.blocks.insert(f.blocks.index(header), pre)
        changed = True


def _exit_compares(f: Function):
    """Compare instructions feeding the exit branch of a loop header."""
    nest = find_loops(f)
    defs = f.definitions()
    for loop in nest.loops:
        t = f.block(loop.header).terminator
        if t is None or t.opcode != "condbr" or not isinstance(t.args[0], Var):
            continue
        d = defs.get(t.args[0].name)
        if d is not None and d[0] == loop.header:
            yield loop, d[1]


def canonicalize_compares(f: Function) -> bool:
    changed = False
    for loop, cmp in list(_exit_compares(f)):
        if cmp.opcode != "icmp.sle":
            continue
        x, y = cmp.args
        if _is_int_lit(y) and y.value != _I64_MAX:
            cmp.args = [x, Lit(I64, y.value + 1)]
        elif _is_int_lit(x) and x.value != _I64_MIN:
            cmp.args = [Lit(I64, x.value - 1), y]
        else:
            block = f.block(loop.header)
            name = f.fresh_name((y.name if isinstance(y, Var) else "bound") + ".plus1")
            block.instrs.insert(block.instrs.index(cmp), Instr("add", [y, Lit(I64, 1)], name))
            cmp.args = [x, Var(name)]
        cmp.opcode = "icmp.slt"
        changed = True
    return changed


def hoist_invariants(f: Function) -> bool:
    changed = False
    for loop in find_loops(f).loops:
        if loop.preheader is None:
            continue
        pre = f.block(loop.preheader)
        moved = True
        while moved:
            moved = False
            defs = f.definitions()
            for lab in loop.blocks:
                block = f.block(lab)
                for ins in list(block.instrs):
                    if ins.opcode not in INT_BINOPS:
                        continue
                    if all(is_invariant(f, a, loop.blocks, defs) for a in ins.args):
                        block.instrs.remove(ins)
                        _insert_before_terminator(pre, ins)
                        moved = changed = True
                        break
                if moved:
                    break
    return changed


def merge_induction_variables(f: Function) -> bool:
    changed = False
    for loop in find_loops(f).loops:
        if loop.preheader is None or loop.latch is None:
            continue
        defs = f.definitions()
        seen: dict = {}
        for phi in f.block(loop.header).phis:
            info = _loop_phi_step(f, loop, phi, defs)
            if info is None:
                continue
            key = (info[0], info[1])
            if key in seen:
                _replace_value(f, phi.result, Var(seen[key]))
                changed = True
            else:
                seen[key] = phi.result
    return changed


def countdown_to_countup(f: Function) -> bool:
    """Replace ``c < k`` on a decrementing counter by a test on an up-counter.

    With ``k`` starting at ``K`` and ``u`` at ``L``, after ``t`` iterations
    ``k = K - t`` and ``u = L + t``, so ``c < k`` holds exactly when
    ``u < L + K - c``.
    """
    changed = False
    for loop, cmp in list(_exit_compares(f)):
        if loop.preheader is None or loop.latch is None or cmp.opcode != "icmp.slt":
            continue
        defs = f.definitions()
        uses = f.uses()
        c, k = cmp.args
        header = f.block(loop.header)
        phis = {p.result: p for p in header.phis}
        if not isinstance(k, Var) or k.name not in phis:
            continue
        if not is_invariant(f, c, loop.blocks, defs):
            continue
        down = _loop_phi_step(f, loop, phis[k.name], defs)
        if down is None or down[1] != -1:
            continue
        step = down[2]
        if {id(ins) for _, ins in uses.get(k.name, [])} != {id(step), id(cmp)}:
            continue
        if [ins for _, ins in uses.get(step.result, [])] != [phis[k.name]]:
            continue
        up = None
        for p in header.phis:
            info = _loop_phi_step(f, loop, p, defs)
            if p.result != k.name and info is not None and info[1] == 1:
                up = (p, info[0])
                break
        if up is None:
            continue
        lin = _combine(
            (1, linear_form(f, up[1], defs)),
            (1, linear_form(f, down[0], defs)),
            (-1, linear_form(f, c, defs)),
        )
        upper = materialize(f, f.block(loop.preheader), lin, hint=up[0].result + ".end")
        cmp.args = [Var(up[0].result), upper]
        changed = True
    return changed


def rebase_induction_variables(f: Function) -> bool:
    """Shift iterators that start at ``X + k`` and are used as ``iv - k``."""
    changed = False
    for loop in find_loops(f).loops:
        if not loop.canonical:
            continue
        defs = f.definitions()
        lower = loop.lower
        if _is_int_lit(lower) and lower.value != 0:
            base, k = Lit(I64, 0), lower.value
        elif isinstance(lower, Var) and lower.name in defs:
            ins = defs[lower.name][1]
            if ins.opcode != "add" or not _is_int_lit(ins.args[1]) or ins.args[1].value == 0:
                continue
            base, k = ins.args[0], ins.args[1].value
        else:
            continue
        iv = loop.iterator
        uses = f.uses().get(iv, [])
        offset = [ins for _, ins in uses if ins.opcode == "add" and ins.args[1] == Lit(I64, wrap_i64(-k))]
        if not offset:
            continue
        step = defs[loop.step][1]
        cmp = defs[loop.compare][1]
        header = f.block(loop.header)
        phi = next(p for p in header.phis if p.result == iv)
        upper = materialize(
            f,
            f.block(loop.preheader),
            _combine((1, linear_form(f, loop.upper, defs)), (-1, {None: k})),
            hint=iv + ".end",
        )
        orig = f.fresh_name(iv + ".orig")
        for _, ins in uses:
            if ins is step or ins is cmp or ins is phi:
                continue
            ins.args = [Var(orig) if a == Var(iv) else a for a in ins.args]
        header.instrs.insert(header.first_non_phi(), Instr("add", [Var(iv), Lit(I64, k)], orig))
        phi.args = [base if l == loop.preheader else a for a, l in zip(phi.args, phi.labels)]
        cmp.args = [Var(iv), upper]
        changed = True
    return changed


def _scratch_stores(f: Function) -> list:
    """Stores into allocated buffers whose contents are never observed."""
    uses = f.uses()
    out = []
    for _, ins in f.instructions():
        if ins.opcode != "call" or ins.callee not in ALLOC_BUILTINS or ins.result is None:
            continue
        region = {ins.result}
        stores = []
        work = [ins.result]
        escaped = False
        while work and not escaped:
            v = work.pop()
            for _, u in uses.get(v, []):
                if u.opcode == "elemptr" and u.args[0] == Var(v) and u.args[1] != Var(v):
                    if u.result not in region:
                        region.add(u.result)
                        work.append(u.result)
                elif u.opcode == "store" and u.args[1] == Var(v) and u.args[0] != Var(v):
                    stores.append(u)
                else:
                    escaped = True
                    break
        if not escaped:
            out.extend(stores)
    return out


_ROOT_OPCODES = ("store", "br", "condbr", "ret")


def eliminate_dead_code(f: Function) -> bool:
    dead_stores = {id(s) for s in _scratch_stores(f)}
    defs = f.definitions()
    live: set[int] = set()
    work = []
    for _, ins in f.instructions():
        root = ins.opcode in _ROOT_OPCODES or (ins.opcode == "call" and ins.callee not in ALLOC_BUILTINS)
        if root and id(ins) not in dead_stores:
            live.add(id(ins))
            work.append(ins)
    while work:
        ins = work.pop()
        for a in ins.args:
            if isinstance(a, Var) and a.name in defs:
                d = defs[a.name][1]
                if id(d) not in live:
                    live.add(id(d))
                    work.append(d)
    changed = False
    for b in f.blocks:
        keep = [ins for ins in b.instrs if id(ins) in live]
        if len(keep) != len(b.instrs):
            b.instrs = keep
            changed = True
    return changed


PASSES = (
    remove_unreachable,
    merge_blocks,
    fold_constants,
    insert_preheaders,
    canonicalize_compares,
    hoist_invariants,
    merge_induction_variables,
    countdown_to_countup,
    rebase_induction_variables,
    fold_constants,
    eliminate_dead_code,
)
