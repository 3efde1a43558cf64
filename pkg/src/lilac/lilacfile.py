"""Reading and writing ``.lilac`` files that mix What and How items."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateHarness, ParseError
from .how import HowProgram, parse_how_item, print_how, validate_how
from .scanner import Scanner
from .what import WhatProgram, parse_computation, print_what


@dataclass
class LilacSource:
    whats: list = field(default_factory=list)
    how: HowProgram = field(default_factory=HowProgram)

    def what(self, name: str) -> WhatProgram:
        for w in self.whats:
            if w.name == name:
                return w
        raise KeyError(name)

    def validate(self):
        return validate_how(self.how, self.whats)


def parse_lilac(text: str) -> LilacSource:
    sc = Scanner(text)
    src = LilacSource()
    while True:
        tok = sc.peek()
        if tok.kind == "eof":
            break
        if tok.text == "COMPUTATION":
            w = parse_computation(sc)
            if any(o.name == w.name for o in src.whats):
                raise DuplicateHarness(f"computation {w.name} defined twice", tok.line, tok.col)
            src.whats.append(w)
        elif tok.text in ("HARNESS", "INPUT", "OUTPUT"):
            parse_how_item(sc, src.how)
        else:
            raise ParseError(f"unexpected {tok.text!r} at top level", tok.line, tok.col)
    if not src.whats and not src.how.harnesses and not src.how.marshal_classes:
        raise ParseError("empty specification", 1, 1)
    return src


def load_lilac(path) -> LilacSource:
    return parse_lilac(Path(path).read_text(encoding="utf-8"))


def print_lilac(src: LilacSource) -> str:
    parts = [print_what(w) for w in src.whats]
    how = print_how(src.how)
    if how:
        parts.append(how)
    return "\n".join(parts)
