"""Cleaning, undersampling, encoding, imputation, scaling and chi-square
feature selection, with statistics fitted on training rows only.

Order of operations inside :func:`fit_transform` is fixed:
undersample -> encode -> impute -> min-max scale -> select top-k.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import substream
from .tabular import ColumnSchema, SchemaError, Table

LOGGER = logging.getLogger(__name__)

STATE_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1
MODES = ("preprocessed", "raw")

MISSING_LIMIT = Fraction(1, 10)
DOMINANCE_LIMIT = Fraction(95, 100)


class ImputationError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense float64 design matrix; NaN marks a missing cell."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise SchemaError("feature matrix shape does not match its names")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(self.values[np.asarray(rows, dtype=np.int64)], self.names)


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "preprocessed"
    alpha: float = 0.5
    k: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"pipeline mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "preprocessed":
            if not 0 < self.alpha <= 1:
                raise ValueError("alpha must lie in (0, 1]")
            if self.k <= 0:
                raise ValueError("k must be positive")


# --------------------------------------------------------------------------
# cleaning


@dataclass
class CleaningReport:
    dropped_missing: list[tuple[str, float]] = field(default_factory=list)
    dropped_dominant: list[tuple[str, float]] = field(default_factory=list)
    surviving_features: list[str] = field(default_factory=list)
    dropped_other: list[str] = field(default_factory=list)
    rows_with_missing: float = 0.0
    missing_cells: float = 0.0

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "dropped_missing": [{"column": c, "missing_fraction": f} for c, f in self.dropped_missing],
            "dropped_dominant": [{"column": c, "dominance": f} for c, f in self.dropped_dominant],
            "dropped_other": list(self.dropped_other),
            "surviving_features": list(self.surviving_features),
            "n_surviving_features": len(self.surviving_features),
            "rows_with_missing": self.rows_with_missing,
            "missing_cells": self.missing_cells,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CleaningReport":
        if data.get("format_version") != REPORT_FORMAT_VERSION:
            raise ValueError(f"unsupported cleaning report version {data.get('format_version')!r}")
        return cls(
            [(d["column"], d["missing_fraction"]) for d in data["dropped_missing"]],
            [(d["column"], d["dominance"]) for d in data["dropped_dominant"]],
            list(data["surviving_features"]),
            list(data["dropped_other"]),
            data["rows_with_missing"],
            data["missing_cells"],
        )


def _dominance(values: np.ndarray, mask: np.ndarray) -> tuple[int, int]:
    present = values[~mask]
    if len(present) == 0:
        return 0, 0
    counts = Counter(present.tolist())
    return max(counts.values()), len(present)


def clean(table: Table, target_column: str | None = None) -> tuple[Table, CleaningReport]:
    """Drop the id column, unused targets, sparse and near-constant features.

    A feature is dropped when strictly more than 10% of all rows are missing,
    or when its most frequent value covers strictly more than 95% of the
    non-missing cells.
    """
    from .tabular import missing_summary

    report = CleaningReport(**missing_summary(table))
    keep = []
    n = table.n_rows
    for col in table.schema:
        if col.kind == "id" or (col.kind == "target" and col.name != target_column):
            report.dropped_other.append(col.name)
            continue
        if col.kind == "target":
            keep.append(col.name)
            continue
        n_missing = int(table.missing[col.name].sum())
        if n and Fraction(n_missing, n) > MISSING_LIMIT:
            report.dropped_missing.append((col.name, n_missing / n))
            continue
        top, present = _dominance(table.columns[col.name], table.missing[col.name])
        if present and Fraction(top, present) > DOMINANCE_LIMIT:
            report.dropped_dominant.append((col.name, top / present))
            continue
        keep.append(col.name)
        report.surviving_features.append(col.name)
    return table.select(keep), report


# --------------------------------------------------------------------------
# undersampling


def random_undersample(
    rows: Sequence[int], target: np.ndarray, alpha: float, seed: int
) -> list[int]:
    """Keep every minority row and floor(N_min / alpha) sampled majority rows.

    ``target`` is indexed by the entries of ``rows``. Returns the kept rows in
    ascending order; the input is returned unchanged when the majority class
    is already small enough.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    rows = [int(r) for r in rows]
    labels = np.asarray(target)[rows] if rows else np.empty(0)
    pos = [r for r, y in zip(rows, labels) if y == 1]
    neg = [r for r, y in zip(rows, labels) if y != 1]
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    n_keep = math.floor(Fraction(len(minority)) / Fraction(alpha).limit_denominator(10**6))
    if len(majority) <= n_keep:
        return sorted(rows)
    kept = substream(seed, "undersample").sample(sorted(majority), n_keep)
    return sorted(minority + kept)


# --------------------------------------------------------------------------
# chi-square scoring


def chi2_scores(features: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Chi-square statistic of each non-negative feature against a binary target.

    Observed per class is the class-wise feature sum, expected is the feature
    total times the class frequency. Features summing to zero score 0.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(target)
    if np.isnan(x).any() or (x < 0).any():
        raise ValueError("chi-square scoring needs non-negative, non-missing features")
    n = len(y)
    scores = np.zeros(x.shape[1])
    if n == 0:
        return scores
    total = x.sum(axis=0)
    for c in (0, 1):
        in_class = y == c
        share = in_class.sum() / n
        if share == 0:
            continue
        observed = x[in_class].sum(axis=0)
        expected = total * share
        nz = expected > 0
        scores[nz] += (observed[nz] - expected[nz]) ** 2 / expected[nz]
    return scores


def top_k(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k best scores; ties go to the lower column index."""
    order = np.argsort(-np.asarray(scores), kind="stable")
    return sorted(order[: min(k, len(order))].tolist())


# --------------------------------------------------------------------------
# encoding / imputation / scaling


def _category_sort_key(token: str):
    try:
        return (0, float(token), token)
    except ValueError:
        return (1, 0.0, token)


def _mode(values: np.ndarray) -> float:
    uniq, counts = np.unique(values, return_counts=True)
    return float(uniq[np.argmax(counts)])  # np.unique sorts, argmax takes first max


@dataclass
class PipelineFitState:
    mode: str
    alpha: float
    k: int
    seed: int
    input_columns: list[dict]
    nominal_categories: dict[str, list[str]] = field(default_factory=dict)
    ordinal_ranks: dict[str, list[str]] = field(default_factory=dict)
    imputers: dict[str, float] = field(default_factory=dict)
    normalizer: dict[str, tuple[float, float]] = field(default_factory=dict)
    encoded_features: list[str] = field(default_factory=list)
    chi2: dict[str, float] = field(default_factory=dict)
    selected: list[str] = field(default_factory=list)
    train_rows_used: int = 0

    @property
    def schema(self) -> list[ColumnSchema]:
        return [
            ColumnSchema(c["name"], c["kind"], tuple(c["ordinal_order"]) if c.get("ordinal_order") else None)
            for c in self.input_columns
        ]

    @property
    def feature_names(self) -> list[str]:
        return list(self.selected) if self.mode == "preprocessed" else [c["name"] for c in self.input_columns]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["normalizer"] = {k: list(v) for k, v in self.normalizer.items()}
        return {"format_version": STATE_FORMAT_VERSION, **data}

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineFitState":
        data = dict(data)
        data.pop("meta", None)  # provenance block added by the command-line tool
        version = data.pop("format_version", None)
        if version != STATE_FORMAT_VERSION:
            raise ValueError(f"unsupported pipeline state version {version!r}")
        data["normalizer"] = {k: tuple(v) for k, v in data["normalizer"].items()}
        return cls(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineFitState":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _schema_dicts(cols: Sequence[ColumnSchema]) -> list[dict]:
    return [
        {"name": c.name, "kind": c.kind, "ordinal_order": list(c.ordinal_order) if c.ordinal_order else None}
        for c in cols
    ]


def _check_columns(table: Table, state: PipelineFitState) -> None:
    have = {c.name: c for c in table.feature_columns()}
    want = state.schema
    unknown = sorted(set(have) - {c.name for c in want})
    if unknown:
        raise SchemaError(f"unknown column(s) for fitted pipeline: {', '.join(unknown)}")
    for col in want:
        if col.name not in have:
            raise SchemaError(f"column {col.name!r} missing from input table")
        if have[col.name].kind != col.kind:
            raise SchemaError(f"column {col.name!r}: kind {have[col.name].kind!r} != fitted {col.kind!r}")


def _encode_source(table: Table, col: ColumnSchema, state: PipelineFitState) -> np.ndarray:
    """Numeric code per row (NaN if missing) before one-hot expansion."""
    values, mask = table.columns[col.name], table.missing[col.name]
    if col.kind in ("numeric", "binary"):
        return np.where(mask, np.nan, values).astype(np.float64)
    if col.kind == "categorical_ordinal":
        lookup = {tok: float(i) for i, tok in enumerate(state.ordinal_ranks[col.name])}
    else:
        lookup = {tok: float(i) for i, tok in enumerate(state.nominal_categories[col.name])}
    out = np.full(table.n_rows, np.nan)
    unseen = 0
    for i, tok in enumerate(values):
        if mask[i]:
            continue
        code = lookup.get(tok)
        if code is None:
            unseen += 1
            out[i] = -1.0
        else:
            out[i] = code
    if unseen:
        LOGGER.warning("column %r: %d unseen categories encoded as all-zero indicators", col.name, unseen)
    return out


def _expand(col: ColumnSchema, codes: np.ndarray, state: PipelineFitState) -> tuple[list[str], np.ndarray]:
    if col.kind != "categorical_nominal":
        return [col.name], codes[:, None]
    cats = state.nominal_categories[col.name]
    block = np.zeros((len(codes), len(cats)))
    for j in range(len(cats)):
        block[:, j] = codes == j
    return [f"{col.name}={cat}" for cat in cats], block


def _encoded_imputed(table: Table, state: PipelineFitState) -> tuple[list[str], np.ndarray]:
    names: list[str] = []
    blocks = []
    for col in state.schema:
        codes = _encode_source(table, col, state)
        codes = np.where(np.isnan(codes), state.imputers[col.name], codes)
        col_names, block = _expand(col, codes, state)
        names.extend(col_names)
        blocks.append(block)
    values = np.hstack(blocks) if blocks else np.empty((table.n_rows, 0))
    return names, values


def _scale(values: np.ndarray, names: Sequence[str], state: PipelineFitState) -> np.ndarray:
    out = np.empty_like(values)
    for j, name in enumerate(names):
        lo, hi = state.normalizer[name]
        out[:, j] = 0.0 if hi == lo else (values[:, j] - lo) / (hi - lo)
    return out


def raw_features(table: Table, state: PipelineFitState | None = None) -> FeatureMatrix:
    """Pipeline without alterations: every input column as a float, NaN if missing.

    Category tokens that parse as numbers keep their numeric value; other
    nominal tokens use the code stored in ``state`` (or their sorted position).
    """
    cols = state.schema if state is not None else table.feature_columns()
    if state is not None:
        _check_columns(table, state)
    out = np.full((table.n_rows, len(cols)), np.nan)
    for j, col in enumerate(cols):
        values, mask = table.columns[col.name], table.missing[col.name]
        if col.kind in ("numeric", "binary"):
            out[:, j] = np.where(mask, np.nan, values)
            continue
        if state is not None and col.name in state.nominal_categories:
            cats = state.nominal_categories[col.name]
        elif col.kind == "categorical_ordinal":
            cats = list(col.ordinal_order)
        else:
            cats = sorted(set(values[~mask].tolist()), key=_category_sort_key)
        numeric = all(_category_sort_key(c)[0] == 0 for c in cats)
        lookup = {tok: (float(tok) if numeric else float(i)) for i, tok in enumerate(cats)}
        for i, tok in enumerate(values):
            if not mask[i]:
                out[i, j] = lookup.get(tok, np.nan)
    return FeatureMatrix(out, tuple(c.name for c in cols))


def fit_transform(
    train: Table, target: np.ndarray, config: PipelineConfig
) -> tuple[FeatureMatrix, np.ndarray, PipelineFitState]:
    """Fit the pipeline on ``train`` and return (features, labels, state).

    Labels are returned because undersampling removes training rows; in raw
    mode nothing is fitted and all rows pass through.
    """
    target = np.asarray(target)
    cols = train.feature_columns()
    state = PipelineFitState(config.mode, config.alpha, config.k, config.seed, _schema_dicts(cols))
    if config.mode == "raw":
        for col in cols:
            if col.kind == "categorical_nominal":
                mask = train.missing[col.name]
                state.nominal_categories[col.name] = sorted(
                    set(train.columns[col.name][~mask].tolist()), key=_category_sort_key
                )
        state.train_rows_used = train.n_rows
        return raw_features(train, state), target, state

    rows = random_undersample(range(train.n_rows), target, config.alpha, config.seed)
    table = train.take(rows)
    y = target[rows]
    state.train_rows_used = len(rows)

    for col in cols:
        mask = table.missing[col.name]
        if col.kind == "categorical_ordinal":
            state.ordinal_ranks[col.name] = list(col.ordinal_order)
        elif col.kind == "categorical_nominal":
            state.nominal_categories[col.name] = sorted(
                set(table.columns[col.name][~mask].tolist()), key=_category_sort_key
            )
    for col in cols:
        codes = _encode_source(table, col, state)
        present = codes[~np.isnan(codes)]
        if len(present) == 0:
            raise ImputationError(f"column {col.name!r} has no observed training values to impute from")
        state.imputers[col.name] = float(np.median(present)) if col.kind == "numeric" else _mode(present)

    names, encoded = _encoded_imputed(table, state)
    state.encoded_features = names
    for j, name in enumerate(names):
        state.normalizer[name] = (float(encoded[:, j].min()), float(encoded[:, j].max()))
    scaled = _scale(encoded, names, state)

    scores = chi2_scores(scaled, y)
    state.chi2 = {name: float(s) for name, s in zip(names, scores)}
    keep = top_k(scores, config.k)
    state.selected = [names[j] for j in keep]
    return FeatureMatrix(scaled[:, keep], tuple(state.selected)), y, state


def transform(table: Table, state: PipelineFitState) -> FeatureMatrix:
    """Apply a fitted pipeline; statistics are never recomputed, no clamping."""
    if state.mode == "raw":
        return raw_features(table, state)
    _check_columns(table, state)
    names, encoded = _encoded_imputed(table, state)
    scaled = _scale(encoded, names, state)
    index = {n: j for j, n in enumerate(names)}
    keep = [index[n] for n in state.selected]
    return FeatureMatrix(scaled[:, keep], tuple(state.selected))
