"""LiLAC-How: how a library implements a LiLAC-What computation.

Embedded implementation code is kept as opaque text.  Only the structure
around it (harness headers, persistent state, marshal classes and the
bindings between marshal classes and program arrays) is interpreted here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import Diagnostic, DuplicateHarness, ParseError
from .scanner import Scanner
from .what import (
    Add,
    Addr,
    Const,
    Expr,
    Kind,
    Mul,
    Name,
    WhatProgram,
    _parse_expr,
    format_expr,
    infer_interface,
)

TOP_KEYWORDS = ("HARNESS", "INPUT", "OUTPUT")
SECTION_KEYWORDS = (
    "Marshaling",
    "PersistentVariables",
    "BeforeFirstExecution",
    "AfterLastExecution",
    "CppHeaderFiles",
)


@dataclass(frozen=True)
class MarshalClassDef:
    kind: str  # "INPUT" | "OUTPUT"
    name: str
    update_code: str
    construct_code: str | None = None
    destruct_code: str | None = None


@dataclass(frozen=True)
class MarshalBinding:
    out_type: str
    out_name: str
    class_name: str
    array_name: str
    extent: Expr


@dataclass(frozen=True)
class Harness:
    name: str
    implements: str
    code: str
    headers: tuple = ()
    persistent_vars: tuple = ()  # (type, name) pairs
    before_first: str | None = None
    after_last: str | None = None
    bindings: tuple = ()


@dataclass
class HowProgram:
    harnesses: list = field(default_factory=list)
    marshal_classes: list = field(default_factory=list)

    def harness(self, name: str) -> Harness:
        for h in self.harnesses:
            if h.name == name:
                return h
        raise KeyError(name)

    def marshal_class(self, name: str) -> MarshalClassDef:
        for c in self.marshal_classes:
            if c.name == name:
                return c
        raise KeyError(name)


# ---------------------------------------------------------------- parsing


def parse_marshal_class(sc: Scanner) -> MarshalClassDef:
    kind = sc.next().text
    name = sc.expect_ident().text
    update = sc.code_block()
    construct = destruct = None
    while True:
        if sc.accept("BeforeFirstExecution"):
            if construct is not None:
                raise sc.error("duplicate BeforeFirstExecution")
            construct = sc.code_block()
        elif sc.accept("AfterLastExecution"):
            if destruct is not None:
                raise sc.error("duplicate AfterLastExecution")
            destruct = sc.code_block()
        else:
            break
    return MarshalClassDef(kind, name, update, construct, destruct)


def _type_words(sc: Scanner, stop: str) -> list[str]:
    """Collect raw words up to (not including) the identifier before ``stop``."""
    words = []
    while True:
        tok = sc.peek()
        if tok.kind == "eof" or tok.text in ("}", ";"):
            raise sc.error("malformed declaration", tok)
        sc.next()
        if sc.at(stop):
            words.append(tok.text)
            return words
        words.append(tok.text)


def _join_type(words: list[str]) -> str:
    out = ""
    for w in words:
        if w == "*" or not out:
            out += w
        else:
            out += " " + w
    return out


def _parse_marshaling(sc: Scanner) -> tuple:
    sc.expect("{")
    bindings = []
    while not sc.accept("}"):
        words = _type_words(sc, "=")
        if len(words) < 2:
            raise sc.error("marshal binding needs a type and a name")
        out_name = words[-1]
        sc.expect("=")
        cls = sc.expect_ident().text
        kw = sc.expect_ident()
        if kw.text != "of":
            raise sc.error("expected 'of'", kw)
        arr = sc.expect_ident().text
        sc.expect("[")
        zero = sc.next()
        if zero.text != "0":
            raise sc.error("marshal ranges must start at 0", zero)
        sc.expect("..")
        extent = _parse_extent(sc)
        sc.expect("]")
        sc.accept(";") or sc.accept(",")
        bindings.append(MarshalBinding(_join_type(words[:-1]), out_name, cls, arr, extent))
    return tuple(bindings)


def _parse_extent(sc: Scanner) -> Expr:
    e = _parse_expr(sc)
    if _has_addr(e):
        raise sc.error("extent expressions may only use names, constants, + and *")
    return e


def _has_addr(e: Expr) -> bool:
    if isinstance(e, Addr):
        return True
    if isinstance(e, (Add, Mul)):
        return _has_addr(e.left) or _has_addr(e.right)
    return False


def _parse_persistent(sc: Scanner) -> tuple:
    sc.expect("{")
    decls = []
    words: list[str] = []
    explicit = False
    while True:
        tok = sc.next()
        if tok.kind == "eof":
            raise sc.error("unterminated PersistentVariables", tok)
        if tok.text == "}":
            break
        if tok.text == ";":
            explicit = True
            if words:
                decls.append(words)
            words = []
            continue
        words.append(tok.text)
    if explicit:
        if words:
            decls.append(words)
    else:
        # no separators: alternate type/name, '*' sticks to the type
        pairs: list[list[str]] = []
        cur: list[str] = []
        for w in words:
            cur.append(w)
            if w != "*" and len([x for x in cur if x != "*"]) == 2:
                pairs.append(cur)
                cur = []
        if cur:
            raise sc.error("PersistentVariables needs <type> <name> pairs")
        decls = pairs
    out = []
    for d in decls:
        if len(d) < 2:
            raise sc.error(f"bad persistent variable declaration {' '.join(d)!r}")
        out.append((_join_type(d[:-1]), d[-1]))
    return tuple(out)


def parse_harness(sc: Scanner) -> Harness:
    sc.expect("HARNESS")
    name = sc.expect_ident().text
    kw = sc.next()
    if kw.text != "IMPLEMENTS":
        raise ParseError(f"HARNESS {name}: expected IMPLEMENTS", kw.line, kw.col)
    implements = sc.expect_ident().text
    code = sc.code_block()
    sections: dict = {}
    while sc.peek().kind == "ident" and sc.peek().text in SECTION_KEYWORDS:
        tok = sc.next()
        if tok.text in sections:
            raise sc.error(f"duplicate section {tok.text}", tok)
        if tok.text == "Marshaling":
            sections[tok.text] = _parse_marshaling(sc)
        elif tok.text == "PersistentVariables":
            sections[tok.text] = _parse_persistent(sc)
        elif tok.text == "CppHeaderFiles":
            sections[tok.text] = tuple(sc.code_block().replace(",", " ").split())
        else:
            sections[tok.text] = sc.code_block()
    return Harness(
        name=name,
        implements=implements,
        code=code,
        headers=sections.get("CppHeaderFiles", ()),
        persistent_vars=sections.get("PersistentVariables", ()),
        before_first=sections.get("BeforeFirstExecution"),
        after_last=sections.get("AfterLastExecution"),
        bindings=sections.get("Marshaling", ()),
    )


def add_item(prog: HowProgram, item, tok) -> None:
    if isinstance(item, Harness):
        if any(h.name == item.name for h in prog.harnesses):
            raise DuplicateHarness(f"harness {item.name} defined twice", tok.line, tok.col)
        prog.harnesses.append(item)
    else:
        if any(c.name == item.name for c in prog.marshal_classes):
            raise DuplicateHarness(f"marshal class {item.name} defined twice", tok.line, tok.col)
        prog.marshal_classes.append(item)


def parse_how_item(sc: Scanner, prog: HowProgram) -> None:
    tok = sc.peek()
    if tok.text == "HARNESS":
        add_item(prog, parse_harness(sc), tok)
    elif tok.text in ("INPUT", "OUTPUT"):
        add_item(prog, parse_marshal_class(sc), tok)
    else:
        raise sc.error(f"expected HARNESS, INPUT or OUTPUT, found {tok.text!r}", tok)


def parse_how(text: str) -> HowProgram:
    sc = Scanner(text)
    prog = HowProgram()
    while sc.peek().kind != "eof":
        parse_how_item(sc, prog)
    return prog


# ---------------------------------------------------------------- printing


def print_marshal_class(c: MarshalClassDef) -> str:
    out = f"{c.kind} {c.name} {{{c.update_code}}}"
    if c.construct_code is not None:
        out += f"\nBeforeFirstExecution {{{c.construct_code}}}"
    if c.destruct_code is not None:
        out += f"\nAfterLastExecution {{{c.destruct_code}}}"
    return out + "\n"


def print_harness(h: Harness) -> str:
    out = [f"HARNESS {h.name} IMPLEMENTS {h.implements} {{{h.code}}}"]
    if h.bindings:
        out.append("Marshaling {")
        for b in h.bindings:
            out.append(
                f"  {b.out_type} {b.out_name} = {b.class_name} of {b.array_name}"
                f" [0 .. {format_expr(b.extent)}]"
            )
        out.append("}")
    if h.persistent_vars:
        out.append("PersistentVariables {")
        out.extend(f"  {t} {n};" for t, n in h.persistent_vars)
        out.append("}")
    if h.before_first is not None:
        out.append(f"BeforeFirstExecution {{{h.before_first}}}")
    if h.after_last is not None:
        out.append(f"AfterLastExecution {{{h.after_last}}}")
    if h.headers:
        out.append("CppHeaderFiles { " + " ".join(h.headers) + " }")
    return "\n".join(out) + "\n"


def print_how(p: HowProgram) -> str:
    parts = [print_marshal_class(c) for c in p.marshal_classes]
    parts += [print_harness(h) for h in p.harnesses]
    return "\n".join(parts)


# ---------------------------------------------------------------- validation


def _extent_names(e: Expr) -> list[str]:
    if isinstance(e, Name):
        return [e.id]
    if isinstance(e, (Add, Mul)):
        return _extent_names(e.left) + _extent_names(e.right)
    if isinstance(e, Const):
        return []
    return [format_expr(e)]


def validate_how(h: HowProgram, whats: Sequence[WhatProgram]) -> list[Diagnostic]:
    """Check cross references between harnesses, classes and computations.

    Problems are returned in source order, never raised.
    """
    diags: list[Diagnostic] = []
    by_name = {w.name: w for w in whats}
    classes = {c.name for c in h.marshal_classes}
    for harness in h.harnesses:
        where = f"HARNESS {harness.name}"
        seen_vars: set[str] = set()
        for _, var in harness.persistent_vars:
            if var in seen_vars:
                diags.append(Diagnostic("DuplicatePersistentVariable", f"{var} declared twice", where))
            seen_vars.add(var)
        what = by_name.get(harness.implements)
        if what is None:
            diags.append(
                Diagnostic("UnknownComputation", f"no COMPUTATION named {harness.implements}", where)
            )
            sig = {}
        else:
            sig = {p.name: p.kind for p in infer_interface(what)}
        scope = {n for n, k in sig.items() if k is Kind.SCALAR_INT}
        for b in harness.bindings:
            if b.class_name not in classes:
                diags.append(Diagnostic("UnknownClass", f"no INPUT/OUTPUT class {b.class_name}", where))
            if what is not None and (b.array_name not in sig or not sig[b.array_name].is_array):
                diags.append(
                    Diagnostic("UnknownArray", f"{b.array_name} is not an array of {what.name}", where)
                )
            if what is not None:
                for n in _extent_names(b.extent):
                    if n not in scope:
                        diags.append(Diagnostic("OpenExtent", f"extent of {b.out_name} uses {n}", where))
            scope.add(b.out_name)
    return diags
