"""Weighted metrics, stratified folds, cross-validation and grid search."""

from __future__ import annotations

import hashlib
import itertools
import logging
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._rng import substream
from .gbdt import GbdtParams, fit, predict_label
from .preprocess import PipelineConfig, fit_transform, transform
from .stats import TTestResult, paired_t_test
from .tabular import StratificationError, Table

LOGGER = logging.getLogger(__name__)

METRIC_NAMES = ("weighted_f1", "weighted_precision", "weighted_recall", "accuracy")
TABLE_HEADS = {"weighted_f1": "wF1", "weighted_precision": "wPrecision",
               "weighted_recall": "wRecall", "accuracy": "Accuracy"}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_labels(cls, predictions, truth) -> "ConfusionMatrix":
        p = np.asarray(predictions).astype(bool)
        t = np.asarray(truth).astype(bool)
        return cls(int((p & t).sum()), int((p & ~t).sum()), int((~p & t).sum()), int((~p & ~t).sum()))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    undefined_precision: bool = False
    undefined_recall: bool = False


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: dict
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "per_class": {str(c): vars(m) for c, m in self.per_class.items()},
            "confusion": vars(self.confusion),
        }


def _ratio(num: int, den: int) -> tuple[Fraction, bool]:
    return (Fraction(0), True) if den == 0 else (Fraction(num, den), False)


def metrics(predictions, truth) -> MetricsReport:
    """Accuracy plus support-weighted precision, recall and F1 over both classes.

    Everything is evaluated in exact rationals and rounded once, so algebraic
    identities such as weighted recall == accuracy hold bit-for-bit.
    """
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if len(predictions) != len(truth):
        raise ValueError("predictions and truth differ in length")
    if len(truth) == 0:
        raise ValueError("metrics need at least one row")
    cm = ConfusionMatrix.from_labels(predictions, truth)
    n = cm.total
    exact = {}
    per_class = {}
    # class 0 swaps the roles of tp/tn and fp/fn
    for c, (tp, fp, fn) in ((0, (cm.tn, cm.fn, cm.fp)), (1, (cm.tp, cm.fp, cm.fn))):
        precision, p_undef = _ratio(tp, tp + fp)
        recall, r_undef = _ratio(tp, tp + fn)
        f1 = Fraction(0) if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        exact[c] = (precision, recall, f1, tp + fn)
        per_class[c] = ClassMetrics(float(precision), float(recall), float(f1), tp + fn, p_undef, r_undef)

    def weighted(pos: int) -> float:
        return float(sum(Fraction(v[3], n) * v[pos] for v in exact.values()))

    return MetricsReport(
        accuracy=float(Fraction(cm.tp + cm.tn, n)),
        weighted_precision=weighted(0),
        weighted_recall=weighted(1),
        weighted_f1=weighted(2),
        per_class=per_class,
        confusion=cm,
    )


def stratified_kfold(target, k: int, seed: int) -> list[list[int]]:
    """Partition row indices into ``k`` class-stratified folds.

    Rows of each class are shuffled, the class lists are concatenated and
    dealt round-robin, so fold sizes differ by at most one and every fold's
    class counts are floor or ceil of the proportional share.
    """
    target = np.asarray(target)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = substream(seed, "folds")
    dealt: list[int] = []
    for c in (0, 1):
        rows = np.flatnonzero(target == c).tolist()
        if len(rows) < k:
            raise StratificationError(f"class {c} has {len(rows)} rows, fewer than k={k}")
        rng.shuffle(rows)
        dealt.extend(rows)
    folds: list[list[int]] = [[] for _ in range(k)]
    for pos, row in enumerate(dealt):
        folds[pos % k].append(row)
    return [sorted(f) for f in folds]


def partition_hash(folds: Sequence[Sequence[int]]) -> str:
    text = "|".join(",".join(map(str, f)) for f in folds)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _summary(values: Sequence[float]) -> dict:
    return {
        "mean": statistics.fmean(values),
        "std": statistics.stdev(values) if len(values) > 1 else 0.0,
    }


@dataclass
class CvResult:
    fold_metrics: list[MetricsReport]
    folds: list[list[int]]
    seed: int

    @property
    def k(self) -> int:
        return len(self.fold_metrics)

    def scores(self, metric: str = "weighted_f1") -> list[float]:
        return [getattr(m, metric) for m in self.fold_metrics]

    def mean(self, metric: str = "weighted_f1") -> float:
        return statistics.fmean(self.scores(metric))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "k": self.k,
            "partition_hash": partition_hash(self.folds),
            "summary": {m: _summary(self.scores(m)) for m in METRIC_NAMES},
            "folds": [m.to_dict() for m in self.fold_metrics],
        }


def fit_predict(
    train: Table, y_train, test: Table, params: GbdtParams, config: PipelineConfig
) -> np.ndarray:
    """Fit the pipeline and the booster on ``train``; predict labels for ``test``."""
    features, y_fit, state = fit_transform(train, y_train, config)
    model = fit(features.values, y_fit, params, features.names)
    return predict_label(model, transform(test, state).values)


def cross_validate(
    table: Table,
    target,
    params: GbdtParams,
    config: PipelineConfig,
    folds: Sequence[Sequence[int]],
    seed: int = 0,
) -> CvResult:
    """Evaluate one (params, pipeline) pair on a fixed fold partition.

    The pipeline is refitted on each fold's training part only.
    """
    target = np.asarray(target)
    reports = []
    all_rows = np.arange(table.n_rows)
    for fold in folds:
        val = np.asarray(sorted(fold), dtype=np.int64)
        trn = np.setdiff1d(all_rows, val)
        pred = fit_predict(table.take(trn), target[trn], table.take(val), params, config)
        reports.append(metrics(pred, target[val]))
    return CvResult(reports, [sorted(int(r) for r in f) for f in folds], seed)


@dataclass
class GridSpec:
    candidates: list[tuple[GbdtParams, PipelineConfig]]
    cv_folds: int = 5
    selection_metric: str = field(default="weighted_f1", init=False)

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("grid needs at least one candidate")


DEFAULT_GBDT_GRID = {
    "n_trees": (100, 300),
    "learning_rate": (0.05, 0.1),
    "max_leaves": (15, 31, 63),
    "min_samples_leaf": (5, 20),
}
DEFAULT_K_GRID = (15, 35, 50)


def default_grid(
    mode: str = "preprocessed",
    alpha: float = 0.5,
    seed: int = 0,
    base: GbdtParams | None = None,
    cv_folds: int = 5,
) -> GridSpec:
    base = base or GbdtParams(seed=seed)
    keys = list(DEFAULT_GBDT_GRID)
    param_sets = [
        GbdtParams(**{**base.to_dict(), **dict(zip(keys, combo))})
        for combo in itertools.product(*(DEFAULT_GBDT_GRID[k] for k in keys))
    ]
    if mode == "raw":
        configs = [PipelineConfig("raw", alpha, DEFAULT_K_GRID[-1], seed)]
    else:
        configs = [PipelineConfig("preprocessed", alpha, k, seed) for k in DEFAULT_K_GRID]
    return GridSpec([(p, c) for c in configs for p in param_sets], cv_folds)


@dataclass
class GridResult:
    best_index: int
    results: list[CvResult | None]
    errors: list[str | None]
    spec: GridSpec

    @property
    def best(self) -> tuple[GbdtParams, PipelineConfig]:
        return self.spec.candidates[self.best_index]

    def to_dict(self) -> dict:
        rows = []
        for i, ((params, config), res, err) in enumerate(zip(self.spec.candidates, self.results, self.errors)):
            rows.append({
                "index": i,
                "params": params.to_dict(),
                "pipeline": vars(config),
                "mean_weighted_f1": None if res is None else res.mean("weighted_f1"),
                "cv": None if res is None else res.to_dict(),
                "error": err,
            })
        return {"best_index": self.best_index, "selection_metric": self.spec.selection_metric, "candidates": rows}


class GridSearchError(RuntimeError):
    pass


def grid_search(table: Table, target, grid: GridSpec, seed: int) -> GridResult:
    """Cross-validated search maximizing mean weighted F1.

    Every candidate sees the same fold partition. Ties go to the earliest
    candidate; a failing candidate is recorded and skipped.
    """
    folds = stratified_kfold(target, grid.cv_folds, seed)
    results: list[CvResult | None] = []
    errors: list[str | None] = []
    for i, (params, config) in enumerate(grid.candidates):
        try:
            results.append(cross_validate(table, target, params, config, folds, seed))
            errors.append(None)
        except Exception as exc:  # noqa: BLE001 - a failed candidate must not end the search
            LOGGER.warning("candidate %d failed: %s", i, exc)
            results.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    scored = [(r.mean(grid.selection_metric), -i) for i, r in enumerate(results) if r is not None]
    if not scored:
        raise GridSearchError("every grid candidate failed: " + "; ".join(e for e in errors if e))
    best = -max(scored)[1]
    return GridResult(best, results, errors, grid)


@dataclass
class AblationResult:
    labels: tuple[str, str]
    cv: tuple[CvResult, CvResult]
    ttest: TTestResult

    def to_dict(self) -> dict:
        return {
            "pipelines": list(self.labels),
            "partition_hash": partition_hash(self.cv[0].folds),
            "cv": [c.to_dict() for c in self.cv],
            "paired_t_test": self.ttest.to_dict(),
        }


def ablation(
    table: Table,
    target,
    params: GbdtParams,
    configs: tuple[PipelineConfig, PipelineConfig],
    k: int = 10,
    seed: int = 0,
) -> AblationResult:
    """Run two pipelines on one shared fold partition and pair their fold F1s."""
    folds = stratified_kfold(target, k, seed)
    first = cross_validate(table, target, params, configs[0], folds, seed)
    second = cross_validate(table, target, params, configs[1], folds, seed)
    test = paired_t_test(first.scores("weighted_f1"), second.scores("weighted_f1"))
    return AblationResult((configs[0].mode, configs[1].mode), (first, second), test)


def format_table(rows: Sequence[tuple[str, str, MetricsReport | dict]]) -> str:
    """Plain-text table with Model, Pipeline, wF1, wPrecision, wRecall, Accuracy."""
    heads = ["Model", "Pipeline", *TABLE_HEADS.values()]
    body = []
    for model, pipeline, rep in rows:
        get = rep.get if isinstance(rep, dict) else (lambda m, r=rep: getattr(r, m))
        body.append([model, pipeline, *(f"{get(m):.3f}" for m in TABLE_HEADS)])
    widths = [max(len(r[i]) for r in [heads, *body]) for i in range(len(heads))]
    fmt = "  ".join("{:<%d}" % w for w in widths)
    lines = [fmt.format(*heads), "  ".join("-" * w for w in widths)]
    lines += [fmt.format(*r) for r in body]
    return "\n".join(lines) + "\n"


def mean_report(cv: CvResult) -> dict:
    return {m: cv.mean(m) for m in METRIC_NAMES}

