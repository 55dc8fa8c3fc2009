"""Exception types shared across the package."""


class AtomshapError(Exception):
    """Base class for all package errors."""


class MissingDictionaryEntry(AtomshapError):
    """A label (or index) is not present in an entity/relation dictionary."""

    def __init__(self, label: str, kind: str = "entity"):
        super().__init__(f"unknown {kind} label: {label!r}")
        self.label = label
        self.kind = kind


class MalformedRow(AtomshapError):
    """A data file row does not match the expected column layout."""

    def __init__(self, line_number: int, detail: str = ""):
        msg = f"malformed row at line {line_number}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.line_number = line_number


class DslSyntaxError(AtomshapError):
    """Query DSL text could not be parsed; carries the offending position."""

    def __init__(self, position: int, detail: str):
        super().__init__(f"syntax error at position {position}: {detail}")
        self.position = position


class UnknownShape(AtomshapError):
    """Query structure does not match any admitted shape template."""


class UnboundVariable(AtomshapError):
    """A variable is used without being introduced, or an atom is degenerate."""


class CyclicDependency(AtomshapError):
    """Variable dependencies contain a cycle (cannot occur for admitted shapes)."""


class SchemaError(AtomshapError):
    """A query file failed validation; carries a JSON pointer to the offender."""

    def __init__(self, pointer: str, detail: str):
        super().__init__(f"{pointer}: {detail}")
        self.pointer = pointer


class DimensionMismatch(AtomshapError):
    """Embedding table dimensions do not agree with the dictionaries."""


class TargetFiltered(AtomshapError):
    """The target entity is not a member of the filtered candidate set."""


class IncompleteTable(AtomshapError):
    """A coalition value table is missing entries."""
