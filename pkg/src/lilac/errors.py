"""Exception hierarchy and diagnostics shared by every lilac module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    where: str = ""

    def __str__(self) -> str:
        loc = f" [{self.where}]" if self.where else ""
        return f"{self.code}{loc}: {self.message}"


class LilacError(Exception):
    """Base class for all toolkit errors."""

    code = "LilacError"


class ParseError(LilacError):
    """Malformed input text; carries a 1-based line and column."""

    code = "SyntaxError"

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)


class EmptyBody(ParseError):
    code = "EmptyBody"


class DuplicateIterator(ParseError):
    code = "DuplicateIterator"


class MultiIndexUnsupported(ParseError):
    code = "MultiIndexUnsupported"


class DuplicateHarness(ParseError):
    code = "DuplicateHarness"


class UnbalancedCodeBlock(ParseError):
    code = "UnbalancedCodeBlock"


class UnknownOpcode(ParseError):
    code = "UnknownOpcode"


class TypeAnnotationMismatch(ParseError):
    code = "TypeAnnotationMismatch"


class KindConflict(LilacError):
    code = "KindConflict"

    def __init__(self, name: str, first: str, second: str):
        self.name = name
        super().__init__(f"{name!r} used as {first} and as {second}")


class UnboundVariable(LilacError):
    code = "UnboundVariable"


class OutOfBounds(LilacError):
    code = "OutOfBounds"

    def __init__(self, base: str, index: int, length: int | None = None):
        self.base = base
        self.index = index
        extra = f" (length {length})" if length is not None else ""
        super().__init__(f"index {index} out of bounds for {base}{extra}")


class TypeTrap(LilacError):
    code = "TypeTrap"


class StepLimitExceeded(LilacError):
    code = "StepLimitExceeded"


class UnregisteredHarness(LilacError):
    code = "UnregisteredHarness"


class DuplicateRegistration(LilacError):
    code = "DuplicateRegistration"


class NonCanonicalLoop(LilacError):
    code = "NonCanonicalLoop"


class BudgetExceeded(LilacError):
    code = "BudgetExceeded"


class RewriteError(LilacError):
    code = "RewriteError"


class ArgNotLoopInvariant(RewriteError):
    code = "ArgNotLoopInvariant"


class SideEffectsInLoop(RewriteError):
    code = "SideEffectsInLoop"


class LiveOutValue(RewriteError):
    code = "LiveOutValue"


class VerifyFailed(RewriteError):
    code = "VerifyFailed"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class MissingClass(LilacError):
    code = "MissingClass"


class HookFailure(LilacError):
    code = "HookFailure"

    def __init__(self, which: str, cause: BaseException):
        self.which = which
        self.cause = cause
        super().__init__(f"{which} hook failed: {cause!r}")


class ProtectionUnsupported(LilacError):
    code = "ProtectionUnsupported"


class ValidationFailed(LilacError):
    code = "ValidationFailed"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))
