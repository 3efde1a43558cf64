"""Replace matched loop nests with harness calls.

The call goes at the end of the outermost preheader, the instruction that
carried the result out of the nest (a store or a use of the reduction) is
retired, the preheader branches straight to the nest exit, and the now
unreachable nest blocks are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .analysis.loops import find_loops
from .analysis.normalize import remove_unreachable
from .errors import ArgNotLoopInvariant, LiveOutValue, SideEffectsInLoop, VerifyFailed
from .interp import harness_symbol
from .ir import Instr, Lit, Module, Var, verify, I64
from .matcher import Match
from .what import Kind, infer_interface

SLOT = "<result slot>"


@dataclass
class RewritePlan:
    match: Match
    harness_name: str  # the library harness chosen for the call, for reporting
    args: list  # IR operands in signature order; SLOT marks the fresh result buffer
    scalar_result_slot: bool = False
    nest_blocks: tuple = ()
    preheader: str = ""
    exit: str = ""
    retired_stores: list = field(default_factory=list)
    out_uses: list = field(default_factory=list)


def plan(match: Match, sig=None, harness: str | None = None, whats=None) -> RewritePlan:
    """Resolve harness arguments and check that the nest can be removed."""
    if sig is None:
        if whats is None:
            raise ValueError("either sig or whats is required")
        sig = infer_interface(next(w for w in whats if w.name == match.what))
    m = match.module
    f = m.function(match.function)
    nest = find_loops(f)
    top = nest.loop(match.header)
    blocks = set(top.blocks)
    sol = match.solution
    red = Var(sol.reduction)
    inner = nest.loop(match.headers[-1])
    exit_block = f.block(inner.exit)

    retired = []
    if sol.target_kind == "store":
        retired = [
            ins
            for ins in exit_block.instrs
            if ins.opcode == "store" and ins.args == [red, sol.target_pointer]
        ]
    retired_ids = {id(s) for s in retired}
    for b in f.blocks:
        if b.label not in blocks:
            continue
        for ins in b.instrs:
            if id(ins) in retired_ids:
                continue
            if ins.opcode == "store" or (ins.opcode == "call"):
                raise SideEffectsInLoop(f"{ins} in loop nest at {match.header} is not part of the match")

    nest_values = {ins.result for b in f.blocks if b.label in blocks for ins in b.instrs if ins.result}
    out_uses = []
    for b in f.blocks:
        if b.label in blocks:
            continue
        for ins in b.instrs:
            if id(ins) in retired_ids:
                continue
            for a in ins.args:
                if isinstance(a, Var) and a.name in nest_values:
                    if a == red and len(match.headers) == 1:
                        out_uses.append(ins)
                    else:
                        raise LiveOutValue(f"%{a.name} is used outside the loop nest in {b.label}")

    args = []
    slot = False
    for p in sig:
        v = sol.names[p.name]
        if p.kind is Kind.ARRAY_FLOAT_OUT and v == red:
            args.append(SLOT)
            slot = True
            continue
        if isinstance(v, Var) and v.name in nest_values:
            raise ArgNotLoopInvariant(f"argument {p.name} = {v} is defined inside the nest")
        args.append(v)
    return RewritePlan(
        match=match,
        harness_name=harness or match.what,
        args=args,
        scalar_result_slot=slot,
        nest_blocks=tuple(top.blocks),
        preheader=top.preheader,
        exit=top.exit,
        retired_stores=retired,
        out_uses=out_uses,
    )


def apply(m: Module, plans) -> Module:
    """Apply ``plans`` (all made against ``m``) and return a new module."""
    plans = list(plans)
    if not plans:
        return m
    out = m.copy()
    located = [
        (
            [_locate(m, out, pl.match.function, s) for s in pl.retired_stores],
            [_locate(m, out, pl.match.function, u) for u in pl.out_uses],
        )
        for pl in plans
    ]
    for pl, (retired, out_uses) in zip(plans, located):
        _apply_one(out, pl, retired, out_uses)
    diags = verify(out)
    if diags:
        raise VerifyFailed(diags)
    return out


def _locate(orig: Module, copy: Module, fname: str, target: Instr) -> Instr:
    of = orig.function(fname)
    cf = copy.function(fname)
    for ob in of.blocks:
        for k, ins in enumerate(ob.instrs):
            if ins is target:
                cb = cf.block(ob.label)
                return cb.instrs[k]
    raise KeyError(str(target))


def _apply_one(out: Module, pl: RewritePlan, retired: list, out_uses: list) -> None:
    match = pl.match
    f = out.function(match.function)
    pre = f.block(pl.preheader)
    taken = f.value_names()
    new = []
    args = []
    slot = None
    for a in pl.args:
        if a == SLOT:
            slot = Var(f.fresh_name(match.solution.reduction + ".slot", taken))
            new.append(Instr("call", [Lit(I64, 1)], slot.name, callee="lilac.alloc.f64"))
            args.append(slot)
        else:
            args.append(a)
    # the symbol names the computation; which harness serves it is a link-time choice
    new.append(Instr("call", args, None, callee=harness_symbol(match.what)))
    red = Var(match.solution.reduction)
    result = None
    if out_uses:
        src = slot if slot is not None else match.solution.target_pointer
        result = Var(f.fresh_name(match.solution.reduction + ".result", taken))
        new.append(Instr("load", [src], result.name))
    for ins in new:
        pre.instrs.insert(len(pre.instrs) - 1, ins)
    for ins in out_uses:
        ins.args = [result if a == red else a for a in ins.args]
    gone = {id(s) for s in retired}
    for b in f.blocks:
        b.instrs = [i for i in b.instrs if id(i) not in gone]
    term = pre.terminator
    term.labels = [pl.exit if l == match.header else l for l in term.labels]
    exit_block = f.block(pl.exit)
    for phi in exit_block.phis:
        phi.labels = [pl.preheader if l == match.header else l for l in phi.labels]
    remove_unreachable(f)


def rewrite(m: Module, matches, whats, harness: str | None = None) -> Module:
    """Plan and apply every match; raises on the first refused plan."""
    plans = [plan(mt, whats=whats, harness=harness) for mt in matches]
    base = matches[0].module if matches else m
    return apply(base, plans)
