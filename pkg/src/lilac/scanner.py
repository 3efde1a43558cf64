"""On-demand tokenizer for ``.lilac`` files.

Tokens are produced lazily because LiLAC-How embeds opaque code blocks that
must be captured byte-for-byte instead of tokenized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError, UnbalancedCodeBlock

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = re.compile(r"[0-9]+")
_PUNCT = ("<=", "..", "<", "(", ")", "{", "}", "[", "]", "=", "*", "+", ";", ",")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "punct" | "eof"
    text: str
    line: int
    col: int


class Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self._peeked: Token | None = None

    def location(self, pos: int | None = None) -> tuple[int, int]:
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, message: str, tok: Token | None = None, cls=ParseError) -> ParseError:
        if tok is not None:
            return cls(message, tok.line, tok.col)
        return cls(message, *self.location())

    def _skip_trivia(self) -> None:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif text.startswith("//", self.pos):
                end = text.find("\n", self.pos)
                self.pos = len(text) if end < 0 else end + 1
            elif text.startswith("/*", self.pos):
                end = text.find("*/", self.pos + 2)
                if end < 0:
                    raise self.error("unterminated comment")
                self.pos = end + 2
            else:
                break

    def _lex(self) -> Token:
        self._skip_trivia()
        line, col = self.location()
        if self.pos >= len(self.text):
            return Token("eof", "", line, col)
        m = _IDENT.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return Token("ident", m.group(), line, col)
        m = _INT.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return Token("int", m.group(), line, col)
        for p in _PUNCT:
            if self.text.startswith(p, self.pos):
                self.pos += len(p)
                return Token("punct", p, line, col)
        raise ParseError(f"unexpected character {self.text[self.pos]!r}", line, col)

    def peek(self) -> Token:
        if self._peeked is None:
            self._peeked = self._lex()
        return self._peeked

    def next(self) -> Token:
        tok = self.peek()
        self._peeked = None
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind != "eof" and tok.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text or tok.kind == "eof":
            raise self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def expect_ident(self) -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise self.error(f"expected identifier, found {tok.text or 'end of input'!r}", tok)
        return tok

    def code_block(self) -> str:
        """Consume ``{ ... }`` and return the text strictly between the braces.

        Braces inside string/char literals and comments do not count.
        """
        if self._peeked is not None:
            if self._peeked.text != "{":
                raise self.error("expected code block '{'", self._peeked)
            start = self.pos
            self._peeked = None
        else:
            self._skip_trivia()
            if not self.text.startswith("{", self.pos):
                raise self.error("expected code block '{'")
            start = self.pos + 1
        text = self.text
        depth = 1
        i = start
        n = len(text)
        while i < n:
            ch = text[i]
            if ch in "\"'":
                j = i + 1
                while j < n and text[j] != ch:
                    j += 2 if text[j] == "\\" else 1
                i = j + 1
                continue
            if text.startswith("//", i):
                j = text.find("\n", i)
                i = n if j < 0 else j + 1
                continue
            if text.startswith("/*", i):
                j = text.find("*/", i + 2)
                i = n if j < 0 else j + 2
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    self.pos = i + 1
                    return text[start:i]
            i += 1
        line, col = self.location(start - 1)
        raise UnbalancedCodeBlock("code block is not closed", line, col)
