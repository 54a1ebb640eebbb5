"""Binary-classification boosting: training loop, prediction and model files."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .._rng import substream
from .histogram import BinMapper
from .objective import log_loss, logistic_grad_hess, sigmoid
from .tree import Tree, grow_tree

MODEL_FORMAT_VERSION = 1
PROBA_CLAMP = 1e-6


class TrainingError(ValueError):
    pass


class ModelSchemaError(ValueError):
    pass


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 31
    max_depth: int | None = None
    min_samples_leaf: int = 20
    min_hessian_leaf: float = 1e-3
    lambda_l2: float = 1.0
    gamma: float = 0.0
    max_bins: int = 255
    seed: int = 0
    scale_pos_weight: float = 1.0
    early_stopping_rounds: int | None = None
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be at least 2")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if self.min_hessian_leaf < 0 or self.lambda_l2 < 0 or self.gamma < 0:
            raise ValueError("min_hessian_leaf, lambda_l2 and gamma must be non-negative")
        if not 2 <= self.max_bins <= 256:
            raise ValueError("max_bins must lie in [2, 256]")
        if self.scale_pos_weight <= 0:
            raise ValueError("scale_pos_weight must be positive")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GbdtParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown GBDT parameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class Forest:
    base_score: float
    trees: list[Tree]
    feature_names: list[str]
    params: GbdtParams

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelSchemaError(
                f"model expects {self.n_features} feature columns, got {X.shape[1] if X.ndim == 2 else X.shape}"
            )
        return X

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "base_score": float(self.base_score),
            "params": self.params.to_dict(),
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Forest":
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ModelSchemaError(f"unsupported model format version {version!r}")
        return cls(
            float(data["base_score"]),
            [Tree.from_dict(t) for t in data["trees"]],
            list(data["feature_names"]),
            GbdtParams.from_dict(data["params"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Forest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict_margin(model: Forest, X) -> np.ndarray:
    X = model._check(X)
    margin = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        margin += tree.predict(X)
    return margin


def predict_proba(model: Forest, X) -> np.ndarray:
    return sigmoid(predict_margin(model, X))


def predict_label(model: Forest, X, threshold: float = 0.5) -> np.ndarray:
    return (predict_proba(model, X) >= threshold).astype(np.int8)


def _prior_log_odds(y: np.ndarray, weights: np.ndarray) -> float:
    p = float(np.sum(weights * y) / np.sum(weights))
    p = min(max(p, PROBA_CLAMP), 1 - PROBA_CLAMP)
    return math.log(p / (1 - p))


def _validation_holdout(y: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    rng = substream(seed, "early_stopping")
    mask = np.zeros(len(y), dtype=bool)
    for c in (0, 1):
        rows = np.flatnonzero(y == c).tolist()
        rng.shuffle(rows)
        mask[rows[: max(1, int(round(len(rows) * fraction)))]] = True
    return mask


def fit(X, y, params: GbdtParams | None = None, feature_names: Sequence[str] | None = None) -> Forest:
    """Train a boosted ensemble on a float matrix where NaN means missing."""
    params = params or GbdtParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise TrainingError("features and target disagree in length")
    if X.shape[1] == 0:
        raise TrainingError("empty feature set")
    if X.shape[0] < 2 or len(np.unique(y)) < 2:
        raise TrainingError("training needs at least two rows and both classes")
    if not np.isin(y, (0.0, 1.0)).all():
        raise TrainingError("target must be 0/1")
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise TrainingError("feature_names length differs from the column count")

    weights = np.where(y == 1, params.scale_pos_weight, 1.0)
    train_mask = np.ones(len(y), dtype=bool)
    if params.early_stopping_rounds is not None:
        train_mask = ~_validation_holdout(y, params.validation_fraction, params.seed)
    train_rows = np.flatnonzero(train_mask)
    val_rows = np.flatnonzero(~train_mask)

    base = _prior_log_odds(y[train_rows], weights[train_rows])
    mapper = BinMapper.fit(X[train_rows], params.max_bins)
    binned = mapper.transform(X)
    margin = np.full(len(y), base)
    trees: list[Tree] = []
    best_loss, best_len = math.inf, 0

    for _ in range(params.n_trees):
        grad, hess = logistic_grad_hess(margin, y)
        grad, hess = grad * weights, hess * weights
        tree = grow_tree(binned, mapper, grad, hess, params, train_rows)
        trees.append(tree)
        margin += tree.value[tree.apply(X)]
        if len(val_rows):
            loss = log_loss(margin[val_rows], y[val_rows])
            if loss < best_loss:
                best_loss, best_len = loss, len(trees)
            elif len(trees) - best_len >= params.early_stopping_rounds:
                break
    if len(val_rows):
        trees = trees[:best_len]
    return Forest(base, trees, names, params)

