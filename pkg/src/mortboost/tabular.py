"""Columnar table ingestion, target binarization and stratified splitting."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._rng import substream

LOGGER = logging.getLogger(__name__)

KINDS = (
    "numeric",
    "binary",
    "categorical_ordinal",
    "categorical_nominal",
    "id",
    "target",
)
NUMERIC_KINDS = ("numeric", "binary")
CATEGORICAL_KINDS = ("categorical_ordinal", "categorical_nominal")
DEFAULT_MISSING_TOKENS = frozenset({"", "?", "NA"})


class SchemaError(ValueError):
    pass


class IngestionError(ValueError):
    pass


class DataError(ValueError):
    pass


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    ordinal_order: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical_ordinal":
            if not self.ordinal_order:
                raise SchemaError(f"ordinal column {self.name!r} needs a category order")
            if len(set(self.ordinal_order)) != len(self.ordinal_order):
                raise SchemaError(f"ordinal column {self.name!r} has duplicate categories")
        elif self.ordinal_order is not None:
            raise SchemaError(f"column {self.name!r}: category order only allowed for ordinal columns")

    @property
    def is_feature(self) -> bool:
        return self.kind not in ("id", "target")


def validate_schema(schema: Sequence[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    if sum(c.kind == "id" for c in schema) != 1:
        raise SchemaError("schema needs exactly one id column")
    if not any(c.kind == "target" for c in schema):
        raise SchemaError("schema needs at least one target column")


def parse_schema(text: str) -> list[ColumnSchema]:
    """Parse ``name = kind[, cat1, cat2, ...]`` lines; ``#`` starts a comment."""
    schema = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"schema line {lineno}: expected 'name = kind'")
        name, rest = (part.strip() for part in line.split("=", 1))
        parts = [p.strip() for p in rest.split(",")]
        kind, cats = parts[0], parts[1:]
        try:
            schema.append(ColumnSchema(name, kind, tuple(cats) if cats else None))
        except SchemaError as exc:
            raise SchemaError(f"schema line {lineno}: {exc}") from None
    validate_schema(schema)
    return schema


def load_schema(path: str | Path) -> list[ColumnSchema]:
    return parse_schema(Path(path).read_text(encoding="utf-8"))


def format_schema(schema: Sequence[ColumnSchema]) -> str:
    lines = []
    for col in schema:
        entry = f"{col.name} = {col.kind}"
        if col.ordinal_order:
            entry += ", " + ", ".join(col.ordinal_order)
        lines.append(entry)
    return "\n".join(lines) + "\n"


def reference_schema_path() -> Path:
    """Codebook schema shipped for the Myocardial Infarction Complications data."""
    return Path(__file__).with_name("data") / "mi_complications.schema"


@dataclass(frozen=True, eq=False)
class Table:
    """Immutable columnar table.

    Numeric and binary columns are float64 arrays with NaN in missing cells;
    every other kind is an object array of raw string tokens with "" in
    missing cells. ``missing`` holds one boolean mask per column.
    """

    schema: tuple[ColumnSchema, ...]
    columns: dict[str, np.ndarray]
    missing: dict[str, np.ndarray]
    n_rows: int = field(default=0)

    def __post_init__(self):
        for col in self.schema:
            values, mask = self.columns[col.name], self.missing[col.name]
            if len(values) != self.n_rows or len(mask) != self.n_rows:
                raise SchemaError(f"column {col.name!r} length differs from n_rows={self.n_rows}")
            values.flags.writeable = False
            mask.flags.writeable = False

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column_schema(self, name: str) -> ColumnSchema:
        for col in self.schema:
            if col.name == name:
                return col
        raise SchemaError(f"unknown column {name!r}")

    def feature_columns(self) -> list[ColumnSchema]:
        return [c for c in self.schema if c.is_feature]

    def take(self, rows: Sequence[int] | np.ndarray) -> "Table":
        idx = np.asarray(rows, dtype=np.int64)
        return Table(
            self.schema,
            {k: v[idx].copy() for k, v in self.columns.items()},
            {k: m[idx].copy() for k, m in self.missing.items()},
            len(idx),
        )

    def select(self, names: Iterable[str]) -> "Table":
        keep = set(names)
        schema = tuple(c for c in self.schema if c.name in keep)
        return Table(
            schema,
            {c.name: self.columns[c.name] for c in schema},
            {c.name: self.missing[c.name] for c in schema},
            self.n_rows,
        )

    def equals(self, other: "Table") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for name in self.names:
            if not np.array_equal(self.missing[name], other.missing[name]):
                return False
            a, b = self.columns[name], other.columns[name]
            if a.dtype.kind == "f":
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True


def _empty_column(kind: str, n: int) -> np.ndarray:
    if kind in NUMERIC_KINDS:
        return np.full(n, np.nan)
    return np.full(n, "", dtype=object)


def read_table(
    stream: io.TextIOBase,
    schema: Sequence[ColumnSchema],
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
) -> Table:
    validate_schema(schema)
    missing_tokens = frozenset(missing_tokens)
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestionError("empty file: header row missing") from None
    expected = [c.name for c in schema]
    unknown = [h for h in header if h not in expected]
    if unknown:
        raise SchemaError(f"unknown header column(s): {', '.join(unknown)}")
    if header != expected:
        absent = [n for n in expected if n not in header]
        if absent:
            raise SchemaError(f"header lacks schema column(s): {', '.join(absent)}")
        raise SchemaError("header column order differs from schema")

    rows = [row for row in reader if row]
    n = len(rows)
    columns = {c.name: _empty_column(c.kind, n) for c in schema}
    missing = {c.name: np.zeros(n, dtype=bool) for c in schema}
    for i, row in enumerate(rows):
        if len(row) != len(schema):
            raise IngestionError(
                f"row {i + 1}: expected {len(schema)} fields, found {len(row)}"
            )
        for col, token in zip(schema, row):
            token = token.strip()
            if token in missing_tokens:
                missing[col.name][i] = True
                continue
            if col.kind in NUMERIC_KINDS:
                try:
                    value = float(token)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise IngestionError(
                        f"row {i + 1}, column {col.name!r}: cannot parse {token!r} as a number"
                    )
                columns[col.name][i] = value
            else:
                if col.kind == "categorical_ordinal" and token not in col.ordinal_order:
                    raise IngestionError(
                        f"row {i + 1}, column {col.name!r}: {token!r} is not a listed category"
                    )
                columns[col.name][i] = token
    return Table(tuple(schema), columns, missing, n)


def load_table(
    path: str | Path,
    schema: Sequence[ColumnSchema],
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
) -> Table:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return read_table(fh, schema, missing_tokens)


def _format_cell(value, kind: str) -> str:
    if kind in NUMERIC_KINDS:
        value = float(value)
        return str(int(value)) if value.is_integer() and abs(value) < 2**53 else repr(value)
    return str(value)


def write_table(table: Table, path: str | Path) -> None:
    """Write ``table`` as comma-delimited text with missing cells left empty."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.names)
        for i in range(table.n_rows):
            writer.writerow(
                "" if table.missing[c.name][i] else _format_cell(table.columns[c.name][i], c.kind)
                for c in table.schema
            )


def binarize_target(table: Table, lethal_column: str) -> np.ndarray:
    """Map lethal-outcome codes 1..7 to 1 and code 0 to 0."""
    col = table.column_schema(lethal_column)
    if col.kind != "target":
        raise SchemaError(f"column {lethal_column!r} is not a target column")
    if table.missing[lethal_column].any():
        first = int(np.flatnonzero(table.missing[lethal_column])[0])
        raise DataError(f"target column {lethal_column!r} has a missing value at row {first + 1}")
    out = np.zeros(table.n_rows, dtype=np.int8)
    for i, token in enumerate(table.columns[lethal_column]):
        try:
            code = float(token)
        except ValueError:
            raise DataError(f"row {i + 1}: target code {token!r} is not numeric") from None
        if code != int(code) or not 0 <= code <= 7:
            raise DataError(f"row {i + 1}: target code {token!r} outside 0..7")
        out[i] = code > 0
    return out


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def _as_fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**9)


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    test_fraction: float


def apportion(class_counts: Sequence[int], fraction: float) -> list[int]:
    """Per-class share of a ``fraction`` subset, summing to the global share.

    Each class gets round-half-up(count * fraction); if the total misses
    round-half-up(n * fraction) the largest class absorbs the difference.
    """
    frac = _as_fraction(fraction)
    shares = [round_half_up(c * frac) for c in class_counts]
    target = round_half_up(sum(class_counts) * frac)
    majority = max(range(len(class_counts)), key=lambda c: (class_counts[c], -c))
    shares[majority] += target - sum(shares)
    return shares


def _class_rows(target: np.ndarray) -> list[list[int]]:
    target = np.asarray(target)
    return [np.flatnonzero(target == c).tolist() for c in (0, 1)]


def stratified_split(target: np.ndarray, test_fraction: float, seed: int) -> SplitIndices:
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    by_class = _class_rows(target)
    if any(len(rows) == 0 for rows in by_class):
        raise StratificationError("both classes need at least one row")
    shares = apportion([len(rows) for rows in by_class], test_fraction)
    rng = substream(seed, "split")
    test: list[int] = []
    train: list[int] = []
    for rows, share in zip(by_class, shares):
        rows = list(rows)
        rng.shuffle(rows)
        test.extend(rows[:share])
        train.extend(rows[share:])
    return SplitIndices(tuple(sorted(train)), tuple(sorted(test)), seed, test_fraction)


def missing_summary(table: Table) -> dict:
    """Share of rows and of feature cells with any missing value."""
    feats = [c.name for c in table.feature_columns()]
    if not feats or table.n_rows == 0:
        return {"rows_with_missing": 0.0, "missing_cells": 0.0}
    mask = np.column_stack([table.missing[n] for n in feats])
    return {
        "rows_with_missing": float(mask.any(axis=1).mean()),
        "missing_cells": float(mask.mean()),
    }
