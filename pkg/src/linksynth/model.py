"""Typed relations, schemas, CSV/JSON I/O and the join-view scaffold."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    ColumnCollision,
    CsvParseError,
    DanglingForeignKey,
    DuplicatePrimaryKey,
    SchemaError,
    TypeMismatch,
)

INTEGER = "integer"
CATEGORICAL = "categorical"
PRIMARY_KEY = "primary-key"
FOREIGN_KEY = "foreign-key"
DATA = "data"

_KIND_ALIASES = {
    "integer": INTEGER,
    "int": INTEGER,
    "categorical": CATEGORICAL,
    "categorical-string": CATEGORICAL,
    "string": CATEGORICAL,
}
_ROLES = {PRIMARY_KEY, FOREIGN_KEY, DATA}

Value = Any  # int | str | None


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = CATEGORICAL
    role: str = DATA

    def __post_init__(self):
        if not self.name:
            raise SchemaError("column name must be nonempty")
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise SchemaError(f"unknown kind {self.kind!r} for column {self.name!r}")
        object.__setattr__(self, "kind", kind)
        if self.role not in _ROLES:
            raise SchemaError(f"unknown role {self.role!r} for column {self.name!r}")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        pks = [c for c in cols if c.role == PRIMARY_KEY]
        fks = [c for c in cols if c.role == FOREIGN_KEY]
        if len(pks) != 1:
            raise SchemaError(f"schema needs exactly one primary key, got {len(pks)}")
        if len(fks) > 1:
            raise SchemaError("schema may have at most one foreign key")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def of(cls, *specs: tuple[str, str, str] | tuple[str, str]) -> "Schema":
        return cls(tuple(Column(*s) for s in specs))

    @classmethod
    def from_dict(cls, mapping: Mapping[str, Mapping[str, str]]) -> "Schema":
        cols = []
        for name, spec in mapping.items():
            if not isinstance(spec, Mapping):
                raise SchemaError(f"column {name!r}: expected an object with kind/role")
            cols.append(Column(name, spec.get("kind", CATEGORICAL), spec.get("role", DATA)))
        return cls(tuple(cols))

    def to_dict(self) -> dict[str, dict[str, str]]:
        return {c.name: {"kind": c.kind, "role": c.role} for c in self.columns}

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def key(self) -> str:
        return next(c.name for c in self.columns if c.role == PRIMARY_KEY)

    @property
    def fk(self) -> str | None:
        return next((c.name for c in self.columns if c.role == FOREIGN_KEY), None)

    @property
    def data_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.role == DATA]

    def index(self, name: str) -> int:
        return self._index[name]

    def has(self, name: str) -> bool:
        return name in self._index

    def column(self, name: str) -> Column:
        return self.columns[self._index[name]]

    def kind(self, name: str) -> str:
        return self.column(name).kind

    def reordered(self, names: Sequence[str]) -> "Schema":
        return Schema(tuple(self.column(n) for n in names))


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


def write_schema(schema: Schema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class Relation:
    """Rows are tuples aligned with ``schema.columns``; order is preserved."""

    schema: Schema
    rows: list[tuple]
    name: str = ""
    _key_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.rows = [tuple(r) for r in self.rows]
        width = len(self.schema.columns)
        ki = self.schema.index(self.schema.key)
        fk = self.schema.fk
        fi = self.schema.index(fk) if fk else None
        index: dict = {}
        fk_nulls = 0
        for n, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(f"{self.name}: row {n} has {len(row)} cells, expected {width}")
            for col, v in zip(self.schema.columns, row):
                if v is None:
                    if col.role != FOREIGN_KEY:
                        raise TypeMismatch("null outside the foreign-key column", n, col.name)
                    fk_nulls += 1
                elif col.kind == INTEGER and (not isinstance(v, int) or isinstance(v, bool)):
                    raise TypeMismatch(f"expected integer, got {v!r}", n, col.name)
                elif col.kind == CATEGORICAL and not isinstance(v, str):
                    raise TypeMismatch(f"expected string, got {v!r}", n, col.name)
            k = row[ki]
            if k in index:
                raise DuplicatePrimaryKey(f"{self.name}: duplicate primary key {k!r}")
            index[k] = n
        if fi is not None and 0 < fk_nulls < len(self.rows):
            raise SchemaError(f"{self.name}: foreign key must be entirely null or entirely set")
        self._key_index = index

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def keys(self) -> list:
        ki = self.schema.index(self.schema.key)
        return [r[ki] for r in self.rows]

    def column(self, name: str) -> list:
        i = self.schema.index(name)
        return [r[i] for r in self.rows]

    def row_by_key(self, key) -> tuple:
        return self.rows[self._key_index[key]]

    def has_key(self, key) -> bool:
        return key in self._key_index

    def value(self, key, col: str):
        return self.row_by_key(key)[self.schema.index(col)]

    def fk_missing(self) -> bool:
        fk = self.schema.fk
        return fk is not None and all(v is None for v in self.column(fk))

    def with_fk(self, assignment: Mapping) -> "Relation":
        """Copy with the FK column set from ``assignment`` (key -> value)."""
        fk = self.schema.fk
        if fk is None:
            raise SchemaError(f"{self.name}: no foreign-key column")
        ki, fi = self.schema.index(self.schema.key), self.schema.index(fk)
        rows = []
        for r in self.rows:
            r = list(r)
            r[fi] = assignment.get(r[ki])
            rows.append(tuple(r))
        return Relation(self.schema, rows, self.name)

    def without_fk(self) -> "Relation":
        return self.with_fk({})

    def extended(self, new_rows: Iterable[tuple]) -> "Relation":
        return Relation(self.schema, list(self.rows) + list(new_rows), self.name)


def _parse_cell(text: str, col: Column, row: int):
    if text == "":
        if col.role == FOREIGN_KEY:
            return None
        raise TypeMismatch("empty cell outside the foreign-key column", row, col.name)
    if col.kind == INTEGER:
        try:
            return int(text)
        except ValueError:
            raise TypeMismatch(f"expected integer, got {text!r}", row, col.name) from None
    return text


def parse_relation(text: str, schema: Schema, name: str = "") -> Relation:
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("missing header row", 1) from None
    except csv.Error as exc:
        raise CsvParseError(str(exc), 1) from None
    if sorted(header) != sorted(schema.names) or len(header) != len(schema.names):
        raise CsvParseError(f"header {header} does not match schema columns {schema.names}", 1)
    schema = schema.reordered(header)
    cols = schema.columns
    rows = []
    seen: dict = {}
    ki = schema.index(schema.key)
    try:
        for line_no, raw in enumerate(reader, start=2):
            if len(raw) != len(cols):
                raise CsvParseError(f"expected {len(cols)} fields, got {len(raw)}", line_no)
            row = tuple(_parse_cell(t, c, line_no) for t, c in zip(raw, cols))
            if row[ki] in seen:
                raise DuplicatePrimaryKey(
                    f"{name or 'relation'}: duplicate primary key {row[ki]!r} at row {line_no}"
                )
            seen[row[ki]] = line_no
            rows.append(row)
    except csv.Error as exc:
        raise CsvParseError(str(exc), reader.line_num) from None
    return Relation(schema, rows, name)


def load_relation(path: str | Path, schema: Schema, name: str | None = None) -> Relation:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_relation(text, schema, name if name is not None else path.stem)


def format_relation(rel: Relation) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(rel.schema.names)
    for row in rel.rows:
        try:
            writer.writerow(["" if v is None else v for v in row])
        except csv.Error as exc:
            raise SchemaError(f"row with key {row[rel.schema.index(rel.schema.key)]!r} cannot be written as CSV: {exc}") from None
    return buf.getvalue()


def write_relation(rel: Relation, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_relation(rel))


class JoinView:
    """One row per R1 tuple: immutable R1 cells plus fillable R2-origin (B) cells.

    ``combo_columns`` is the subset of B columns that phase I assigns; the
    remaining B columns are filled when the FK is written back.
    """

    def __init__(
        self,
        r1_schema: Schema,
        r1_rows: Sequence[tuple],
        b_schema: Sequence[Column],
        combo_columns: Sequence[str] | None = None,
    ):
        self.key_column = r1_schema.key
        self.r1_columns = [c for c in r1_schema.columns if c.role != FOREIGN_KEY]
        self.b_columns = list(b_schema)
        self._r1_idx = {c.name: i for i, c in enumerate(self.r1_columns)}
        self._b_idx = {c.name: i for i, c in enumerate(self.b_columns)}
        ki = self._r1_idx[self.key_column]
        self._r1 = [tuple(r) for r in r1_rows]
        self.keys = [r[ki] for r in self._r1]
        self.position = {k: i for i, k in enumerate(self.keys)}
        self._b: list[list] = [[None] * len(self.b_columns) for _ in self._r1]
        self.combo_columns: tuple[str, ...] = tuple(
            combo_columns if combo_columns is not None else self.b_names
        )

    @property
    def r1_names(self) -> list[str]:
        return [c.name for c in self.r1_columns]

    @property
    def b_names(self) -> list[str]:
        return [c.name for c in self.b_columns]

    def __len__(self) -> int:
        return len(self._r1)

    def is_b(self, col: str) -> bool:
        return col in self._b_idx

    def has_column(self, col: str) -> bool:
        return col in self._r1_idx or col in self._b_idx

    def r1_value(self, i: int, col: str):
        return self._r1[i][self._r1_idx[col]]

    def r1_row(self, i: int) -> tuple:
        return self._r1[i]

    def r1_column(self, col: str) -> list:
        j = self._r1_idx[col]
        return [r[j] for r in self._r1]

    def b_value(self, i: int, col: str):
        return self._b[i][self._b_idx[col]]

    def b_column(self, col: str) -> list:
        j = self._b_idx[col]
        return [r[j] for r in self._b]

    def value(self, i: int, col: str):
        if col in self._r1_idx:
            return self._r1[i][self._r1_idx[col]]
        return self._b[i][self._b_idx[col]]

    def set_b(self, i: int, col: str, value) -> None:
        self._b[i][self._b_idx[col]] = value

    def combo(self, i: int) -> tuple | None:
        """B values over ``combo_columns``, or None if any is still null."""
        vals = tuple(self._b[i][self._b_idx[c]] for c in self.combo_columns)
        return None if any(v is None for v in vals) else vals

    def assign_combo(self, i: int, combo: Sequence) -> None:
        for c, v in zip(self.combo_columns, combo):
            self._b[i][self._b_idx[c]] = v

    def row_dict(self, i: int) -> dict:
        d = {c.name: v for c, v in zip(self.r1_columns, self._r1[i])}
        d.update({c.name: v for c, v in zip(self.b_columns, self._b[i])})
        return d

    def copy(self) -> "JoinView":
        out = JoinView.__new__(JoinView)
        out.__dict__.update(self.__dict__)
        out._b = [list(r) for r in self._b]
        return out

    def unassigned(self) -> list[int]:
        return [i for i in range(len(self)) if self.combo(i) is None]


def init_join_view(r1: Relation, r2_schema: Schema, combo_columns: Sequence[str] | None = None) -> JoinView:
    fk = r1.schema.fk
    if fk is None:
        raise SchemaError(f"{r1.name}: R1 needs a foreign-key column")
    if not r1.fk_missing():
        raise SchemaError(f"{r1.name}: foreign-key column must be missing (all null)")
    r1_names = {c.name for c in r1.schema.columns if c.role != FOREIGN_KEY}
    b_cols = [c for c in r2_schema.columns if c.role == DATA]
    clash = sorted(r1_names & {c.name for c in b_cols})
    if clash:
        raise ColumnCollision(f"R1 and R2 share column names {clash}")
    fi = r1.schema.index(fk)
    r1_rows = [r[:fi] + r[fi + 1:] for r in r1.rows]
    r1_schema = Schema(tuple(c for c in r1.schema.columns if c.role != FOREIGN_KEY))
    return JoinView(r1_schema, r1_rows, b_cols, combo_columns)


def materialize_join(r1_hat: Relation, r2_hat: Relation) -> JoinView:
    fk = r1_hat.schema.fk
    if fk is None:
        raise SchemaError(f"{r1_hat.name}: R1 needs a foreign-key column")
    b_cols = [c for c in r2_hat.schema.columns if c.role == DATA]
    clash = sorted({c.name for c in r1_hat.schema.columns} & {c.name for c in b_cols})
    if clash:
        raise ColumnCollision(f"R1 and R2 share column names {clash}")
    fi = r1_hat.schema.index(fk)
    ki = r1_hat.schema.index(r1_hat.schema.key)
    b_idx = [r2_hat.schema.index(c.name) for c in b_cols]
    r1_schema = Schema(tuple(c for c in r1_hat.schema.columns if c.role != FOREIGN_KEY))
    view = JoinView(r1_schema, [r[:fi] + r[fi + 1:] for r in r1_hat.rows], b_cols)
    for i, r in enumerate(r1_hat.rows):
        ref = r[fi]
        if ref is None or not r2_hat.has_key(ref):
            raise DanglingForeignKey(f"row with key {r[ki]!r} references missing key {ref!r}")
        row2 = r2_hat.row_by_key(ref)
        view._b[i] = [row2[j] for j in b_idx]
    return view
