from __future__ import annotations


class LinksynthError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(LinksynthError):
    pass


class CsvParseError(LinksynthError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class TypeMismatch(CsvParseError):
    pass


class DuplicatePrimaryKey(LinksynthError):
    pass


class ColumnCollision(LinksynthError):
    pass


class DanglingForeignKey(LinksynthError):
    pass


class ConstraintError(LinksynthError):
    pass


class UnknownColumn(ConstraintError):
    pass


class ForbiddenFKReference(ConstraintError):
    pass


class MalformedRange(ConstraintError):
    pass


class ContradictoryConstraints(ConstraintError):
    pass


class InstanceTooLarge(LinksynthError):
    pass


class CapacityExceeded(LinksynthError):
    pass
