"""Exception hierarchy shared by all irinstr components."""

from __future__ import annotations


class InstrError(Exception):
    """Base class for every error raised by this package."""


class IRParseError(InstrError):
    """Problem in textual IR input, reported with a 1-based line/column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column


class IRSyntaxError(IRParseError):
    """Malformed token or construct."""


class IRSemanticError(IRParseError):
    """Well-formed text violating an IR invariant (duplicate name, bad arity, ...)."""


class VoidSizeError(InstrError):
    """The byte size of `void` was requested."""


class TerminatorViolation(InstrError):
    """An insertion would place an instruction after a block terminator."""


class JsonError(InstrError):
    """Configuration text is not valid JSON."""


class SchemaError(InstrError):
    """Configuration JSON violates the rule schema.

    `path` addresses the offending element, e.g.
    ``phases[0].instructionsRules[2].getTypeSize``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


class EngineError(InstrError):
    """Base class for failures while applying rules to a module."""


class CalleeMismatch(EngineError):
    """An inserted call disagrees with the callee's definition signature."""


class MissingDefinition(EngineError):
    """A callee has no definition or declaration where one is required."""


class DuplicateDefinition(EngineError):
    """Merging definitions would redefine an already-defined function."""


class UnknownFunction(EngineError):
    """A rule names a function the module does not define."""


class PluginFailure(InstrError):
    """An analysis plugin crashed, timed out, or broke the wire protocol."""
