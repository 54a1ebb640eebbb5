from .forest import (
    Forest,
    GbdtParams,
    ModelSchemaError,
    TrainingError,
    fit,
    predict_label,
    predict_margin,
    predict_proba,
)
from .histogram import BinMapper, Histogram, build_histogram
from .objective import log_loss, logistic_grad_hess, sigmoid
from .tree import Tree, TreeNode, find_best_split, grow_tree

__all__ = [
    "BinMapper",
    "Forest",
    "GbdtParams",
    "Histogram",
    "ModelSchemaError",
    "TrainingError",
    "Tree",
    "TreeNode",
    "build_histogram",
    "find_best_split",
    "fit",
    "grow_tree",
    "log_loss",
    "logistic_grad_hess",
    "predict_label",
    "predict_margin",
    "predict_proba",
    "sigmoid",
]
