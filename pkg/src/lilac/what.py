"""LiLAC-What: the declarative description of a computation.

A program is a chain of ``forall`` loops around a single dot-product
reduction::

    COMPUTATION spmv_csr
    forall (0 <= i < rows) {
      output[i] = dot(row_ptr[i] <= j < row_ptr[i + 1]) val[j] * x[col_ind[j]];
    }

Free variables of the program form the harness interface.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

from .errors import (
    DuplicateIterator,
    EmptyBody,
    KindConflict,
    MultiIndexUnsupported,
    OutOfBounds,
    ParseError,
    UnboundVariable,
)
from .scanner import Scanner

REDUCTION_KEYWORDS = ("dot", "sum")


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Addr:
    base: str
    indices: tuple = ()

    @property
    def index(self) -> "Expr | None":
        return self.indices[0] if self.indices else None


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


Expr = Union[Name, Const, Addr, Add, Mul]


@dataclass(frozen=True)
class Range:
    lower: Expr
    iterator: str
    upper: Expr


@dataclass(frozen=True)
class DotOp:
    target: Addr
    range: Range
    lhs: Addr
    rhs: Addr
    keyword: str = field(default="dot", compare=False)


@dataclass(frozen=True)
class ForAll:
    range: Range
    body: "Body"


Body = Union[ForAll, DotOp]


@dataclass(frozen=True)
class WhatProgram:
    name: str
    body: Body

    @property
    def foralls(self) -> list[ForAll]:
        out = []
        node = self.body
        while isinstance(node, ForAll):
            out.append(node)
            node = node.body
        return out

    @property
    def dot(self) -> DotOp:
        node = self.body
        while isinstance(node, ForAll):
            node = node.body
        return node

    @property
    def iterators(self) -> list[str]:
        return [f.range.iterator for f in self.foralls] + [self.dot.range.iterator]

    def free_variables(self) -> list[str]:
        return [p.name for p in infer_interface(self)]


# ---------------------------------------------------------------- parsing


def _parse_expr(sc: Scanner) -> Expr:
    left = _parse_term(sc)
    while sc.accept("+"):
        left = Add(left, _parse_term(sc))
    return left


def _parse_term(sc: Scanner) -> Expr:
    left = _parse_atom(sc)
    while sc.accept("*"):
        left = Mul(left, _parse_atom(sc))
    return left


def _parse_atom(sc: Scanner) -> Expr:
    tok = sc.next()
    if tok.kind == "int":
        return Const(int(tok.text))
    if tok.text == "(" and tok.kind == "punct":
        inner = _parse_expr(sc)
        sc.expect(")")
        return inner
    if tok.kind != "ident":
        raise sc.error(f"expected expression, found {tok.text or 'end of input'!r}", tok)
    if sc.at("["):
        return _parse_indices(sc, tok)
    return Name(tok.text)


def _parse_indices(sc: Scanner, base_tok) -> Addr:
    indices = []
    while sc.accept("["):
        indices.append(_parse_expr(sc))
        sc.expect("]")
    if len(indices) > 1:
        raise MultiIndexUnsupported(
            f"{base_tok.text}: only single-index addresses are supported", base_tok.line, base_tok.col
        )
    return Addr(base_tok.text, tuple(indices))


def _parse_addr(sc: Scanner, require_index: bool) -> Addr:
    tok = sc.expect_ident()
    addr = _parse_indices(sc, tok)
    if require_index and not addr.indices:
        raise sc.error(f"{tok.text}: dot operands must be indexed", tok)
    return addr


def _parse_range(sc: Scanner) -> Range:
    sc.expect("(")
    lower = _parse_expr(sc)
    sc.expect("<=")
    it = sc.expect_ident().text
    sc.expect("<")
    upper = _parse_expr(sc)
    sc.expect(")")
    return Range(lower, it, upper)


def _parse_body(sc: Scanner) -> Body:
    tok = sc.peek()
    if tok.kind == "ident" and tok.text == "forall":
        sc.next()
        rng = _parse_range(sc)
        sc.expect("{")
        if sc.at("}"):
            raise EmptyBody("forall body must not be empty", *sc.location())
        body = _parse_body(sc)
        sc.expect("}")
        return ForAll(rng, body)
    if tok.kind != "ident":
        raise sc.error("expected 'forall' or a dot assignment", tok)
    target = _parse_addr(sc, require_index=False)
    sc.expect("=")
    kw = sc.expect_ident()
    if kw.text not in REDUCTION_KEYWORDS:
        raise sc.error(f"expected 'dot' or 'sum', found {kw.text!r}", kw)
    rng = _parse_range(sc)
    lhs = _parse_addr(sc, require_index=True)
    sc.expect("*")
    rhs = _parse_addr(sc, require_index=True)
    sc.expect(";")
    return DotOp(target, rng, lhs, rhs, kw.text)


def parse_computation(sc: Scanner) -> WhatProgram:
    """Parse one ``COMPUTATION`` item; the keyword must be the next token."""
    start = sc.expect("COMPUTATION")
    name = sc.expect_ident().text
    if sc.peek().kind == "eof" or sc.at("COMPUTATION"):
        raise EmptyBody(f"computation {name} has no body", start.line, start.col)
    prog = WhatProgram(name, _parse_body(sc))
    _check_iterators(prog, start)
    return prog


def _check_iterators(prog: WhatProgram, tok) -> None:
    seen: set[str] = set()
    for it in prog.iterators:
        if it in seen:
            raise DuplicateIterator(f"iterator {it!r} bound twice in {prog.name}", tok.line, tok.col)
        seen.add(it)
    ranges = [f.range for f in prog.foralls] + [prog.dot.range]
    for rng in ranges:
        if rng.iterator in _names(rng.lower) | _names(rng.upper):
            raise ParseError(f"range bounds of {rng.iterator!r} reference the iterator", tok.line, tok.col)
    for base in _bases_in_body(prog):
        if base in seen:
            raise ParseError(f"iterator {base!r} used as an array base", tok.line, tok.col)


def parse_what(text: str) -> list[WhatProgram]:
    """Parse a text containing only ``COMPUTATION`` items."""
    sc = Scanner(text)
    progs = []
    while sc.peek().kind != "eof":
        progs.append(parse_computation(sc))
    if not progs:
        raise ParseError("no COMPUTATION found", 1, 1)
    return progs


# ---------------------------------------------------------------- printing


def format_expr(e: Expr) -> str:
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Addr):
        return e.base + "".join(f"[{format_expr(i)}]" for i in e.indices)
    if isinstance(e, Add):
        right = format_expr(e.right)
        if isinstance(e.right, Add):
            right = f"({right})"
        return f"{format_expr(e.left)} + {right}"
    if isinstance(e, Mul):
        parts = []
        for side, wrap in ((e.left, (Add,)), (e.right, (Add, Mul))):
            s = format_expr(side)
            parts.append(f"({s})" if isinstance(side, wrap) else s)
        return " * ".join(parts)
    raise TypeError(e)


def _format_range(r: Range) -> str:
    return f"({format_expr(r.lower)} <= {r.iterator} < {format_expr(r.upper)})"


def print_what(p: WhatProgram) -> str:
    lines = [f"COMPUTATION {p.name}"]
    depth = 0
    node = p.body
    while isinstance(node, ForAll):
        lines.append("  " * depth + f"forall {_format_range(node.range)} {{")
        depth += 1
        node = node.body
    d = node
    lines.append(
        "  " * depth
        + f"{format_expr(d.target)} = {d.keyword}{_format_range(d.range)} "
        + f"{format_expr(d.lhs)} * {format_expr(d.rhs)};"
    )
    for k in reversed(range(depth)):
        lines.append("  " * k + "}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- traversal


def _names(e: Expr) -> set[str]:
    if isinstance(e, Name):
        return {e.id}
    if isinstance(e, Addr):
        out = {e.base}
        for i in e.indices:
            out |= _names(i)
        return out
    if isinstance(e, (Add, Mul)):
        return _names(e.left) | _names(e.right)
    return set()


def _bases_in_body(p: WhatProgram) -> Iterator[str]:
    def walk(e):
        if isinstance(e, Addr):
            yield e.base
            for i in e.indices:
                yield from walk(i)
        elif isinstance(e, (Add, Mul)):
            yield from walk(e.left)
            yield from walk(e.right)

    for f in p.foralls:
        yield from walk(f.range.lower)
        yield from walk(f.range.upper)
    d = p.dot
    for e in (d.target, d.range.lower, d.range.upper, d.lhs, d.rhs):
        yield from walk(e)


# ---------------------------------------------------------------- interface


class Kind(enum.Enum):
    SCALAR_INT = "scalar-int"
    ARRAY_INT = "array-int"
    ARRAY_FLOAT_IN = "array-float-in"
    ARRAY_FLOAT_OUT = "array-float-out"

    @property
    def is_array(self) -> bool:
        return self is not Kind.SCALAR_INT


@dataclass(frozen=True)
class Param:
    name: str
    kind: Kind
    scalar_target: bool = False  # array-float-out of length 1

    def __str__(self) -> str:
        suffix = "(len 1)" if self.scalar_target else ""
        return f"{self.name}: {self.kind.value}{suffix}"


HarnessSignature = tuple  # tuple[Param, ...]


def infer_interface(p: WhatProgram) -> tuple[Param, ...]:
    """Derive the harness parameter list from how free variables are used.

    Order is the first lexical appearance in the program text.
    """
    iterators = set(p.iterators)
    kinds: dict[str, Kind] = {}
    scalar_target = False

    def note(name: str, kind: Kind) -> None:
        if name in iterators:
            return
        old = kinds.get(name)
        if old is None:
            kinds[name] = kind
        elif old is not kind:
            raise KindConflict(name, old.value, kind.value)

    def index_expr(e: Expr) -> None:
        if isinstance(e, Name):
            note(e.id, Kind.SCALAR_INT)
        elif isinstance(e, Addr):
            note(e.base, Kind.ARRAY_INT)
            for i in e.indices:
                index_expr(i)
        elif isinstance(e, (Add, Mul)):
            index_expr(e.left)
            index_expr(e.right)

    def value_addr(a: Addr, kind: Kind) -> None:
        note(a.base, kind)
        for i in a.indices:
            index_expr(i)

    def rng(r: Range) -> None:
        index_expr(r.lower)
        index_expr(r.upper)

    for f in p.foralls:
        rng(f.range)
    d = p.dot
    value_addr(d.target, Kind.ARRAY_FLOAT_OUT)
    if not d.target.indices:
        scalar_target = True
    rng(d.range)
    value_addr(d.lhs, Kind.ARRAY_FLOAT_IN)
    value_addr(d.rhs, Kind.ARRAY_FLOAT_IN)
    return tuple(
        Param(n, k, scalar_target=scalar_target and n == d.target.base) for n, k in kinds.items()
    )


# ---------------------------------------------------------------- semantics

Bindings = Mapping[str, Union[int, Sequence]]


def _eval_int(e: Expr, env, it: dict[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Name):
        if e.id in it:
            return it[e.id]
        if e.id not in env:
            raise UnboundVariable(e.id)
        return env[e.id]
    if isinstance(e, Addr):
        return int(_load(e, env, it))
    if isinstance(e, Add):
        return _eval_int(e.left, env, it) + _eval_int(e.right, env, it)
    if isinstance(e, Mul):
        return _eval_int(e.left, env, it) * _eval_int(e.right, env, it)
    raise TypeError(e)


def _slot(a: Addr, env, it) -> tuple:
    if a.base not in env:
        raise UnboundVariable(a.base)
    arr = env[a.base]
    idx = _eval_int(a.index, env, it) if a.indices else 0
    if not 0 <= idx < len(arr):
        raise OutOfBounds(a.base, idx, len(arr))
    return arr, idx


def _load(a: Addr, env, it):
    arr, idx = _slot(a, env, it)
    return arr[idx]


def execute(p: WhatProgram, env, iters: dict[str, int] | None = None) -> None:
    """Run ``p`` in place over ``env``; arrays must support item assignment."""
    it = dict(iters or {})

    def run(body: Body) -> None:
        if isinstance(body, ForAll):
            r = body.range
            lo = _eval_int(r.lower, env, it)
            hi = _eval_int(r.upper, env, it)
            for v in range(lo, hi):
                it[r.iterator] = v
                run(body.body)
            it.pop(r.iterator, None)
            return
        r = body.range
        lo = _eval_int(r.lower, env, it)
        hi = _eval_int(r.upper, env, it)
        acc = 0.0
        for v in range(lo, hi):
            it[r.iterator] = v
            acc = acc + float(_load(body.lhs, env, it)) * float(_load(body.rhs, env, it))
        it.pop(r.iterator, None)
        arr, idx = _slot(body.target, env, it)
        arr[idx] = acc

    run(p.body)


def interpret_what(p: WhatProgram, env: Bindings) -> dict:
    """Reference semantics: returns new bindings with target arrays updated.

    The accumulator starts at exactly 0.0 and sums left to right over the
    range; ``env`` itself is not modified.
    """
    out: dict = {}
    for param in infer_interface(p):
        if param.name not in env:
            raise UnboundVariable(param.name)
    for k, v in env.items():
        if isinstance(v, (int, float)):
            out[k] = v
        else:
            out[k] = list(v)
    execute(p, out)
    return out

