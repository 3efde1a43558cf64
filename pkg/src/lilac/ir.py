"""A small LLVM-flavoured SSA intermediate representation.

Textual format::

    func @dot(%a: ptr f64, %b: ptr f64, %n: i64) -> f64 {
    entry:
      br header
    header:
      %i = phi [0, entry], [%i.next, body]
      %s = phi [0.0, entry], [%s.next, body]
      %c = icmp.slt %i, %n
      condbr %c, body, exit
    ...
    }

Values are ``%name``, blocks are bare labels, ``;`` starts a comment.
There is one integer width (i64), one float width (f64) and one level of
pointers.  ``elemptr`` is the only address arithmetic.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import Diagnostic, ParseError, TypeAnnotationMismatch, UnknownOpcode

I1 = "i1"
I64 = "i64"
F64 = "f64"
PTR_I64 = "ptr i64"
PTR_F64 = "ptr f64"
VOID = "void"
VALUE_TYPES = (I1, I64, F64, PTR_I64, PTR_F64)

INT_BINOPS = ("add", "sub", "mul")
FLOAT_BINOPS = ("fadd", "fsub", "fmul")
ICMPS = ("icmp.eq", "icmp.ne", "icmp.slt", "icmp.sle")
TERMINATORS = ("br", "condbr", "ret")
OPCODES = INT_BINOPS + FLOAT_BINOPS + ICMPS + (
    "elemptr",
    "load",
    "store",
    "phi",
    "call",
) + TERMINATORS

# allocation builtins: one i64 element count -> fresh zeroed buffer
ALLOC_BUILTINS = {"lilac.alloc.f64": PTR_F64, "lilac.alloc.i64": PTR_I64}
HARNESS_PREFIX = "lilac."


def pointee(ty: str) -> str:
    return ty[4:]


def pointer_to(ty: str) -> str:
    return "ptr " + ty


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "%" + self.name


class Lit:
    """A typed literal.  Equality is by type and exact textual value."""

    __slots__ = ("type", "value")

    def __init__(self, type: str, value):
        self.type = type
        if type == F64:
            value = float(value)
        elif type == I1:
            value = bool(value)
        else:
            value = int(value)
        self.value = value

    def _key(self):
        return (self.type, repr(self.value))

    def __eq__(self, other) -> bool:
        return isinstance(other, Lit) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"Lit({self.type}, {self.value!r})"

    def __str__(self) -> str:
        if self.type == I1:
            return "true" if self.value else "false"
        if self.type == F64:
            return repr(self.value)
        return str(self.value)


def i64(v: int) -> Lit:
    return Lit(I64, v)


def f64(v: float) -> Lit:
    return Lit(F64, v)


@dataclass
class Instr:
    opcode: str
    args: list = field(default_factory=list)
    result: str | None = None
    labels: list = field(default_factory=list)
    callee: str | None = None

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    def phi_incoming(self) -> list:
        return list(zip(self.args, self.labels))

    def __str__(self) -> str:
        return format_instr(self)


@dataclass
class Block:
    label: str
    instrs: list = field(default_factory=list)

    @property
    def terminator(self) -> Instr | None:
        if self.instrs and self.instrs[-1].is_terminator:
            return self.instrs[-1]
        return None

    @property
    def phis(self) -> list:
        out = []
        for ins in self.instrs:
            if ins.opcode != "phi":
                break
            out.append(ins)
        return out

    def successors(self) -> list:
        t = self.terminator
        if t is None or t.opcode == "ret":
            return []
        seen = []
        for lab in t.labels:
            if lab not in seen:
                seen.append(lab)
        return seen

    def first_non_phi(self) -> int:
        return len(self.phis)


@dataclass
class Function:
    name: str
    params: list = field(default_factory=list)  # (name, type)
    ret_type: str = VOID
    blocks: list = field(default_factory=list)

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def block_map(self) -> dict:
        return {b.label: b for b in self.blocks}

    def instructions(self):
        for b in self.blocks:
            for ins in b.instrs:
                yield b, ins

    def definitions(self) -> dict:
        """Map value name -> (block label, Instr) for instruction results."""
        out = {}
        for b, ins in self.instructions():
            if ins.result is not None:
                out[ins.result] = (b.label, ins)
        return out

    def param_types(self) -> dict:
        return dict(self.params)

    def value_names(self) -> set:
        names = {p for p, _ in self.params}
        for _, ins in self.instructions():
            if ins.result is not None:
                names.add(ins.result)
        return names

    def fresh_name(self, hint: str, taken: set | None = None) -> str:
        taken = self.value_names() if taken is None else taken
        if hint not in taken:
            taken.add(hint)
            return hint
        k = 1
        while f"{hint}.{k}" in taken:
            k += 1
        name = f"{hint}.{k}"
        taken.add(name)
        return name

    def fresh_label(self, hint: str) -> str:
        labels = {b.label for b in self.blocks}
        if hint not in labels:
            return hint
        k = 1
        while f"{hint}.{k}" in labels:
            k += 1
        return f"{hint}.{k}"

    def predecessors(self) -> dict:
        preds = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.successors():
                if s in preds:
                    preds[s].append(b.label)
        return preds

    def replace_uses(self, old, new) -> int:
        n = 0
        for _, ins in self.instructions():
            for k, a in enumerate(ins.args):
                if a == old:
                    ins.args[k] = new
                    n += 1
        return n

    def uses(self) -> dict:
        """Map value name -> list of (block label, Instr) using it."""
        out: dict = {}
        for b, ins in self.instructions():
            for a in ins.args:
                if isinstance(a, Var):
                    out.setdefault(a.name, []).append((b.label, ins))
        return out


@dataclass
class Module:
    functions: list = field(default_factory=list)

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def copy(self) -> "Module":
        return copy.deepcopy(self)


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<var>%[A-Za-z0-9_.]+)
  | (?P<glob>@[A-Za-z0-9_.]+)
  | (?P<float>-?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+))
  | (?P<int>-?\d+)
  | (?P<arrow>->)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[(){}\[\],:=])
    """,
    re.VERBOSE,
)


class _Line:
    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise ParseError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
            if m.lastgroup != "ws":
                self.toks.append((m.lastgroup, m.group(), pos + 1))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eol", "", len(self.toks) and self.toks[-1][2] + 1)

    def next(self):
        t = self.peek()
        self.i += 1
        return t

    def error(self, msg: str, tok=None, cls=ParseError):
        col = (tok or self.peek())[2] or 1
        return cls(msg, self.lineno, col)

    def expect(self, text: str):
        t = self.next()
        if t[1] != text:
            raise self.error(f"expected {text!r}, found {t[1] or 'end of line'!r}", t)
        return t

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    def done(self):
        if not self.at_end():
            raise self.error(f"unexpected {self.peek()[1]!r}")


def _parse_type(ln: _Line, allow_void: bool = False) -> str:
    t = ln.next()
    if t[1] == "ptr":
        inner = ln.next()
        if inner[1] not in (I64, F64):
            raise ln.error(f"bad pointee type {inner[1]!r}", inner)
        return "ptr " + inner[1]
    if t[1] in (I1, I64, F64) or (allow_void and t[1] == VOID):
        return t[1]
    raise ln.error(f"unknown type {t[1]!r}", t)


def _parse_operand(ln: _Line):
    t = ln.next()
    kind, text = t[0], t[1]
    if kind == "var":
        return Var(text[1:])
    if kind == "int":
        return i64(int(text))
    if kind == "float":
        return f64(float(text))
    if kind == "ident" and text in ("true", "false"):
        return Lit(I1, text == "true")
    raise ln.error(f"expected operand, found {text or 'end of line'!r}", t)


def _parse_label(ln: _Line) -> str:
    t = ln.next()
    if t[0] != "ident":
        raise ln.error(f"expected block label, found {t[1] or 'end of line'!r}", t)
    return t[1]


def _parse_instr(ln: _Line) -> Instr:
    result = None
    if ln.peek()[0] == "var":
        result = ln.next()[1][1:]
        ln.expect("=")
    t = ln.next()
    op = t[1]
    if t[0] != "ident":
        raise ln.error(f"expected opcode, found {op or 'end of line'!r}", t)
    if op not in OPCODES:
        raise ln.error(f"unknown opcode {op!r}", t, UnknownOpcode)
    produces = op not in ("store", "br", "condbr", "ret", "call")
    if produces and result is None:
        raise ln.error(f"{op} must define a value", t)
    if op in ("store", "br", "condbr", "ret") and result is not None:
        raise ln.error(f"{op} does not define a value", t)
    ins = Instr(op, result=result)
    if op == "phi":
        while True:
            ln.expect("[")
            ins.args.append(_parse_operand(ln))
            ln.expect(",")
            ins.labels.append(_parse_label(ln))
            ln.expect("]")
            if ln.at_end():
                break
            ln.expect(",")
    elif op == "br":
        ins.labels.append(_parse_label(ln))
    elif op == "condbr":
        ins.args.append(_parse_operand(ln))
        ln.expect(",")
        ins.labels.append(_parse_label(ln))
        ln.expect(",")
        ins.labels.append(_parse_label(ln))
    elif op == "call":
        g = ln.next()
        if g[0] != "glob":
            raise ln.error("expected @callee", g)
        ins.callee = g[1][1:]
        ln.expect("(")
        if ln.peek()[1] != ")":
            while True:
                ins.args.append(_parse_operand(ln))
                if ln.peek()[1] != ",":
                    break
                ln.next()
        ln.expect(")")
    elif op == "ret":
        if not ln.at_end():
            ins.args.append(_parse_operand(ln))
    elif op == "load":
        ins.args.append(_parse_operand(ln))
    else:
        ins.args.append(_parse_operand(ln))
        ln.expect(",")
        ins.args.append(_parse_operand(ln))
    ln.done()
    return ins


def parse_ir(text: str) -> Module:
    mod = Module()
    fn: Function | None = None
    block: Block | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0]
        if not line.strip():
            continue
        ln = _Line(line, lineno)
        head = ln.peek()
        if fn is None:
            if head[1] != "func":
                raise ln.error(f"expected 'func', found {head[1]!r}")
            ln.next()
            g = ln.next()
            if g[0] != "glob":
                raise ln.error("expected @name", g)
            fn = Function(g[1][1:])
            if any(f.name == fn.name for f in mod.functions):
                raise ln.error(f"function @{fn.name} defined twice", g)
            ln.expect("(")
            if ln.peek()[1] != ")":
                while True:
                    p = ln.next()
                    if p[0] != "var":
                        raise ln.error("expected %parameter", p)
                    ln.expect(":")
                    fn.params.append((p[1][1:], _parse_type(ln)))
                    if ln.peek()[1] != ",":
                        break
                    ln.next()
            ln.expect(")")
            ln.expect("->")
            fn.ret_type = _parse_type(ln, allow_void=True)
            ln.expect("{")
            ln.done()
            block = None
            continue
        if head[1] == "}" and len(ln.toks) == 1:
            if not fn.blocks:
                raise ln.error(f"function @{fn.name} has no blocks")
            mod.functions.append(fn)
            fn = None
            continue
        if head[0] == "ident" and len(ln.toks) == 2 and ln.toks[1][1] == ":":
            if any(b.label == head[1] for b in fn.blocks):
                raise ln.error(f"block {head[1]} defined twice")
            block = Block(head[1])
            fn.blocks.append(block)
            continue
        if block is None:
            raise ln.error("instruction outside of a block")
        ins = _parse_instr(ln)
        if ins.opcode == "ret":
            _check_ret(fn, ins, ln)
        block.instrs.append(ins)
    if fn is not None:
        raise ParseError(f"function @{fn.name} is not closed", len(text.splitlines()) + 1, 1)
    return mod


def _check_ret(fn: Function, ins: Instr, ln: _Line) -> None:
    if fn.ret_type == VOID and ins.args:
        raise ln.error("ret with a value in a void function", cls=TypeAnnotationMismatch)
    if fn.ret_type != VOID and not ins.args:
        raise ln.error(f"ret without a value in a function returning {fn.ret_type}", cls=TypeAnnotationMismatch)
    if ins.args and isinstance(ins.args[0], Lit) and ins.args[0].type != fn.ret_type:
        raise ln.error(
            f"ret {ins.args[0]} does not match return type {fn.ret_type}", cls=TypeAnnotationMismatch
        )


def load_ir(path) -> Module:
    return parse_ir(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- printing


def format_instr(ins: Instr) -> str:
    lhs = f"%{ins.result} = " if ins.result is not None else ""
    op = ins.opcode
    if op == "phi":
        body = ", ".join(f"[{a}, {lab}]" for a, lab in zip(ins.args, ins.labels))
    elif op == "br":
        body = ins.labels[0]
    elif op == "condbr":
        body = f"{ins.args[0]}, {ins.labels[0]}, {ins.labels[1]}"
    elif op == "call":
        return f"{lhs}call @{ins.callee}(" + ", ".join(str(a) for a in ins.args) + ")"
    else:
        body = ", ".join(str(a) for a in ins.args)
    return f"{lhs}{op} {body}".rstrip()


def print_function(f: Function) -> str:
    params = ", ".join(f"%{n}: {t}" for n, t in f.params)
    lines = [f"func @{f.name}({params}) -> {f.ret_type} {{"]
    for b in f.blocks:
        lines.append(f"{b.label}:")
        lines.extend("  " + format_instr(ins) for ins in b.instrs)
    lines.append("}")
    return "\n".join(lines) + "\n"


def print_ir(m: Module) -> str:
    return "\n".join(print_function(f) for f in m.functions)


# ---------------------------------------------------------------- typing


def operand_type(a, types: dict) -> str | None:
    if isinstance(a, Lit):
        return a.type
    return types.get(a.name)


def result_type(ins: Instr, types: dict, module: Module | None = None) -> str | None:
    op = ins.opcode
    if op in INT_BINOPS:
        return I64
    if op in FLOAT_BINOPS:
        return F64
    if op in ICMPS:
        return I1
    if op == "elemptr":
        return operand_type(ins.args[0], types)
    if op == "load":
        t = operand_type(ins.args[0], types)
        return pointee(t) if t and t.startswith("ptr ") else None
    if op == "phi":
        for a in ins.args:
            t = operand_type(a, types)
            if t is not None:
                return t
        return None
    if op == "call":
        if ins.callee in ALLOC_BUILTINS:
            return ALLOC_BUILTINS[ins.callee]
        if module is not None:
            for g in module.functions:
                if g.name == ins.callee:
                    return g.ret_type if g.ret_type != VOID else None
        return None
    return None


def infer_types(f: Function, module: Module | None = None) -> dict:
    """Map every value name in ``f`` to its type (None when undeterminable)."""
    types = dict(f.params)
    changed = True
    while changed:
        changed = False
        for _, ins in f.instructions():
            if ins.result is None or types.get(ins.result) is not None:
                continue
            t = result_type(ins, types, module)
            if t is not None:
                types[ins.result] = t
                changed = True
    for _, ins in f.instructions():
        if ins.result is not None:
            types.setdefault(ins.result, None)
    return types


# ---------------------------------------------------------------- verifier


def verify(m: Module) -> list[Diagnostic]:
    """Check SSA dominance, terminators, phi coverage and typing."""
    diags: list[Diagnostic] = []
    names = set()
    for f in m.functions:
        if f.name in names:
            diags.append(Diagnostic("DuplicateFunction", f"@{f.name} defined twice", f.name))
        names.add(f.name)
        diags.extend(verify_function(f, m))
    return diags


def verify_function(f: Function, m: Module | None = None) -> list[Diagnostic]:
    from .analysis.cfg import dominator_tree

    diags: list[Diagnostic] = []

    def err(code, msg, where=""):
        diags.append(Diagnostic(code, msg, f"@{f.name}" + (f":{where}" if where else "")))

    if not f.blocks:
        err("EmptyFunction", "function has no blocks")
        return diags
    labels = [b.label for b in f.blocks]
    if len(set(labels)) != len(labels):
        err("DuplicateBlock", "block labels are not unique")
    label_set = set(labels)

    defs: dict[str, tuple[str, int]] = {}
    for pname, _ in f.params:
        if pname in defs:
            err("DuplicateDefinition", f"%{pname} defined twice")
        defs[pname] = ("", -1)
    for b in f.blocks:
        for k, ins in enumerate(b.instrs):
            if ins.result is not None:
                if ins.result in defs:
                    err("DuplicateDefinition", f"%{ins.result} defined twice", b.label)
                defs[ins.result] = (b.label, k)

    structural_ok = True
    for b in f.blocks:
        if not b.instrs or not b.instrs[-1].is_terminator:
            err("MissingTerminator", "block does not end in br, condbr or ret", b.label)
            structural_ok = False
        for k, ins in enumerate(b.instrs[:-1]):
            if ins.is_terminator:
                err("MisplacedTerminator", f"{ins.opcode} before end of block", b.label)
                structural_ok = False
        seen_non_phi = False
        for ins in b.instrs:
            if ins.opcode == "phi":
                if seen_non_phi:
                    err("MisplacedPhi", f"phi %{ins.result} after non-phi instruction", b.label)
            else:
                seen_non_phi = True
            for lab in ins.labels:
                if lab not in label_set:
                    err("UnknownBlock", f"reference to unknown block {lab}", b.label)
                    structural_ok = False
    if not structural_ok:
        return diags

    preds = f.predecessors()
    if preds[f.entry.label]:
        err("EntryHasPredecessors", "entry block is a branch target", f.entry.label)
    idom = dominator_tree(f)
    reachable = set(idom)

    def dominates(a: str, b: str) -> bool:
        while True:
            if a == b:
                return True
            nxt = idom.get(b)
            if nxt is None or nxt == b:
                return False
            b = nxt

    for b in f.blocks:
        if b.label not in reachable:
            continue
        for k, ins in enumerate(b.instrs):
            if ins.opcode == "phi":
                inc = ins.labels
                want = preds[b.label]
                if sorted(inc) != sorted(want):
                    err(
                        "PhiCoverage",
                        f"phi %{ins.result} incoming {sorted(inc)} != predecessors {sorted(want)}",
                        b.label,
                    )
                for a, lab in zip(ins.args, ins.labels):
                    if isinstance(a, Var):
                        if a.name not in defs:
                            err("UndefinedValue", f"%{a.name} is not defined", b.label)
                            continue
                        dblock, _ = defs[a.name]
                        if dblock and lab in reachable and not dominates(dblock, lab):
                            err("DominanceViolation", f"%{a.name} does not dominate edge {lab}->{b.label}", b.label)
                continue
            for a in ins.args:
                if not isinstance(a, Var):
                    continue
                if a.name not in defs:
                    err("UndefinedValue", f"%{a.name} is not defined", b.label)
                    continue
                dblock, dk = defs[a.name]
                if not dblock:
                    continue
                if dblock == b.label:
                    if dk >= k:
                        err("DominanceViolation", f"%{a.name} used before its definition", b.label)
                elif not dominates(dblock, b.label):
                    err("DominanceViolation", f"%{a.name} defined in {dblock} does not dominate use", b.label)

    _check_types(f, m, err)
    return diags


def _check_types(f: Function, m: Module | None, err) -> None:
    types = infer_types(f, m)
    funcs = {g.name: g for g in m.functions} if m is not None else {}

    def ty(a):
        return operand_type(a, types)

    for b in f.blocks:
        for ins in b.instrs:
            op = ins.opcode
            ts = [ty(a) for a in ins.args]
            where = b.label
            if op in INT_BINOPS and ts != [I64, I64]:
                err("TypeMismatch", f"{op} needs (i64, i64), got {ts}", where)
            elif op in FLOAT_BINOPS and ts != [F64, F64]:
                err("TypeMismatch", f"{op} needs (f64, f64), got {ts}", where)
            elif op in ICMPS and ts != [I64, I64]:
                err("TypeMismatch", f"{op} needs (i64, i64), got {ts}", where)
            elif op == "elemptr" and (ts[0] not in (PTR_I64, PTR_F64) or ts[1] != I64):
                err("TypeMismatch", f"elemptr needs (ptr T, i64), got {ts}", where)
            elif op == "load" and ts[0] not in (PTR_I64, PTR_F64):
                err("TypeMismatch", f"load needs a pointer, got {ts[0]}", where)
            elif op == "store" and (ts[1] not in (PTR_I64, PTR_F64) or ts[0] != pointee(ts[1])):
                err("TypeMismatch", f"store needs (T, ptr T), got {ts}", where)
            elif op == "condbr" and ts[0] != I1:
                err("TypeMismatch", f"condbr needs i1, got {ts[0]}", where)
            elif op == "phi":
                rt = types.get(ins.result)
                if rt is None or any(t != rt for t in ts):
                    err("TypeMismatch", f"phi %{ins.result} mixes types {ts}", where)
            elif op == "ret":
                want = f.ret_type
                got = ts[0] if ts else VOID
                if got != want:
                    err("TypeMismatch", f"ret {got} in function returning {want}", where)
            elif op == "call":
                _check_call(ins, ts, funcs, err, where)


def _check_call(ins: Instr, ts: list, funcs: dict, err, where: str) -> None:
    callee = ins.callee
    if callee in ALLOC_BUILTINS:
        if ts != [I64]:
            err("TypeMismatch", f"@{callee} takes one i64 count", where)
        return
    if callee in funcs:
        g = funcs[callee]
        want = [t for _, t in g.params]
        if ts != want:
            err("TypeMismatch", f"@{callee} expects {want}, got {ts}", where)
        if ins.result is not None and g.ret_type == VOID:
            err("TypeMismatch", f"@{callee} returns void", where)
        return
    if callee.startswith(HARNESS_PREFIX):
        if ins.result is not None:
            err("TypeMismatch", f"harness @{callee} returns void", where)
        if any(t is None or t == I1 for t in ts):
            err("TypeMismatch", f"harness @{callee} arguments must be i64, f64 or pointers", where)
        return
    err("UnknownCallee", f"@{callee} is neither defined nor a harness", where)
