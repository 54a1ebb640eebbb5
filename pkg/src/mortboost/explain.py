"""Path-dependent Tree SHAP for boosted forests, a subset-enumeration
reference, and global importance rankings.

Attributions live in margin (log-odds) space, where they add up exactly to
the model output.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .gbdt import Forest, ModelSchemaError
from .gbdt.tree import LEAF, Tree

SHAP_FORMAT_VERSION = 1
MAX_ENUMERATED_FEATURES = 20


class CapacityError(ValueError):
    pass


@dataclass
class ShapMatrix:
    base_value: float
    values: np.ndarray
    feature_names: list[str]

    def to_dict(self) -> dict:
        return {
            "format_version": SHAP_FORMAT_VERSION,
            "base_value": float(self.base_value),
            "feature_names": list(self.feature_names),
            "rows": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ShapMatrix":
        if data.get("format_version") != SHAP_FORMAT_VERSION:
            raise ValueError(f"unsupported SHAP file version {data.get('format_version')!r}")
        names = list(data["feature_names"])
        values = np.asarray(data["rows"], dtype=np.float64).reshape(-1, len(names))
        return cls(float(data["base_value"]), values, names)

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.feature_names)
            for row in self.values:
                writer.writerow(repr(float(v)) for v in row)


# --------------------------------------------------------------------------
# polynomial-time recursion (extend / unwind over the active feature path)


@njit(cache=True)
def _extend(feat, zero, one, weight, length, pz, po, pi):
    feat[length] = pi
    zero[length] = pz
    one[length] = po
    weight[length] = 1.0 if length == 0 else 0.0
    for i in range(length - 1, -1, -1):
        weight[i + 1] += po * weight[i] * (i + 1) / (length + 1)
        weight[i] = pz * weight[i] * (length - i) / (length + 1)


@njit(cache=True)
def _unwind(feat, zero, one, weight, last, i):
    """Remove path element ``i`` from a path whose final index is ``last``."""
    o, z = one[i], zero[i]
    n = weight[last]
    for j in range(last - 1, -1, -1):
        if o != 0.0:
            t = weight[j]
            weight[j] = n * (last + 1) / ((j + 1) * o)
            n = t - weight[j] * z * (last - j) / (last + 1)
        else:
            weight[j] = weight[j] * (last + 1) / (z * (last - j))
    for j in range(i, last):
        feat[j] = feat[j + 1]
        zero[j] = zero[j + 1]
        one[j] = one[j + 1]


@njit(cache=True)
def _unwound_sum(zero, one, weight, last, i):
    o, z = one[i], zero[i]
    n = weight[last]
    total = 0.0
    for j in range(last - 1, -1, -1):
        if o != 0.0:
            t = n * (last + 1) / ((j + 1) * o)
            total += t
            n = weight[j] - t * z * (last - j) / (last + 1)
        else:
            total += weight[j] * (last + 1) / (z * (last - j))
    return total


@njit(cache=True)
def _tree_shap_row(x, feature, threshold, default_left, left, right, value, cover,
                   phi, feats, zeros, ones, weights, stack_i, stack_f):
    # Depth-first walk with an explicit stack (numba cannot reload cached
    # recursive functions). Each frame is (node, level, length | pz, po, pi);
    # the path at ``level`` stays intact while the hot subtree is explored,
    # so the cold sibling can still copy it.
    stack_i[0, 0], stack_i[0, 1], stack_i[0, 2] = 0, 0, 0
    stack_f[0, 0], stack_f[0, 1], stack_f[0, 2] = 1.0, 1.0, -1.0
    top = 1
    while top > 0:
        top -= 1
        node, level, length = stack_i[top, 0], stack_i[top, 1], stack_i[top, 2]
        pz, po, pi = stack_f[top, 0], stack_f[top, 1], int(stack_f[top, 2])
        if level > 0:
            for i in range(length):
                feats[level, i] = feats[level - 1, i]
                zeros[level, i] = zeros[level - 1, i]
                ones[level, i] = ones[level - 1, i]
                weights[level, i] = weights[level - 1, i]
        f_row, z_row, o_row, w_row = feats[level], zeros[level], ones[level], weights[level]
        _extend(f_row, z_row, o_row, w_row, length, pz, po, pi)
        length += 1

        f = feature[node]
        if f == -1:
            for i in range(1, length):
                w = _unwound_sum(z_row, o_row, w_row, length - 1, i)
                phi[f_row[i]] += w * (o_row[i] - z_row[i]) * value[node]
            continue

        xv = x[f]
        if np.isnan(xv):
            go_left = default_left[node]
        else:
            go_left = xv <= threshold[node]
        hot = left[node] if go_left else right[node]
        cold = right[node] if go_left else left[node]

        iz = 1.0
        io = 1.0
        k = -1
        for i in range(1, length):
            if f_row[i] == f:
                k = i
                break
        if k != -1:
            iz = z_row[k]
            io = o_row[k]
            _unwind(f_row, z_row, o_row, w_row, length - 1, k)
            length -= 1

        # cold first so the hot child is explored next
        for child, one_frac in ((cold, 0.0), (hot, io)):
            stack_i[top, 0], stack_i[top, 1], stack_i[top, 2] = child, level + 1, length
            stack_f[top, 0] = iz * cover[child] / cover[node]
            stack_f[top, 1] = one_frac
            stack_f[top, 2] = f
            top += 1


@njit(cache=True)
def _tree_shap_rows(X, feature, threshold, default_left, left, right, value, cover, depth, out):
    size = depth + 2
    feats = np.zeros((size, size), dtype=np.int64)
    zeros = np.zeros((size, size))
    ones = np.zeros((size, size))
    weights = np.zeros((size, size))
    stack_i = np.zeros((2 * size, 3), dtype=np.int64)
    stack_f = np.zeros((2 * size, 3))
    phi = np.zeros(X.shape[1])
    for r in range(X.shape[0]):
        phi[:] = 0.0
        _tree_shap_row(X[r], feature, threshold, default_left, left, right, value, cover,
                       phi, feats, zeros, ones, weights, stack_i, stack_f)
        out[r] += phi


def tree_depth(tree: Tree) -> int:
    depth = np.zeros(tree.n_nodes, dtype=np.int64)
    for i in range(tree.n_nodes):
        if tree.feature[i] != LEAF:
            depth[tree.left[i]] = depth[tree.right[i]] = depth[i] + 1
    return int(depth.max())


def expected_value(tree: Tree) -> float:
    """Cover-weighted mean leaf value."""
    if tree.cover[0] <= 0:
        raise ModelSchemaError("tree root has zero cover")
    leaves = tree.feature == LEAF
    return float(np.sum(tree.cover[leaves] * tree.value[leaves]) / tree.cover[0])


def tree_shap(model: Forest, X) -> ShapMatrix:
    """Exact path-dependent Shapley values of every row, summed over trees."""
    X = model._check(X)
    out = np.zeros(X.shape, dtype=np.float64)
    base = float(model.base_score)
    for tree in model.trees:
        base += expected_value(tree)
        if tree.feature[0] == LEAF:
            continue
        _tree_shap_rows(
            X, tree.feature, tree.threshold, tree.default_left, tree.left, tree.right,
            tree.value, tree.cover, tree_depth(tree), out,
        )
    return ShapMatrix(base, out, list(model.feature_names))


# --------------------------------------------------------------------------
# subset-enumeration reference


def _conditional_value(tree: Tree, x: np.ndarray, known: frozenset, node: int = 0) -> float:
    if tree.feature[node] == LEAF:
        return float(tree.value[node])
    f = int(tree.feature[node])
    l, r = int(tree.left[node]), int(tree.right[node])
    if f in known:
        xv = x[f]
        go_left = bool(tree.default_left[node]) if math.isnan(xv) else xv <= tree.threshold[node]
        return _conditional_value(tree, x, known, l if go_left else r)
    c = tree.cover[node]
    return (tree.cover[l] / c) * _conditional_value(tree, x, known, l) + \
        (tree.cover[r] / c) * _conditional_value(tree, x, known, r)


def used_features(model: Forest) -> list[int]:
    used = set()
    for tree in model.trees:
        used.update(int(f) for f in tree.feature if f != LEAF)
    return sorted(used)


def brute_force_shap(model: Forest, instance) -> np.ndarray:
    """Shapley values by enumerating every subset of the features in use."""
    x = np.asarray(instance, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ModelSchemaError("instance length differs from the model's feature count")
    players = used_features(model)
    m = len(players)
    if m > MAX_ENUMERATED_FEATURES:
        raise CapacityError(f"{m} features in use; enumeration is limited to {MAX_ENUMERATED_FEATURES}")

    def v(subset) -> float:
        known = frozenset(subset)
        return model.base_score + sum(_conditional_value(t, x, known) for t in model.trees)

    phi = np.zeros(model.n_features)
    values = {}
    for size in range(m + 1):
        for subset in itertools.combinations(players, size):
            values[subset] = v(subset)
    for j in players:
        others = [p for p in players if p != j]
        total = 0.0
        for size in range(m):
            w = math.factorial(size) * math.factorial(m - size - 1) / math.factorial(m)
            for subset in itertools.combinations(others, size):
                with_j = tuple(sorted(subset + (j,)))
                total += w * (values[with_j] - values[subset])
        phi[j] = total
    return phi


# --------------------------------------------------------------------------
# global ranking


@dataclass
class GlobalImportance:
    importance: dict[str, float]
    ranking: list[str]

    def to_text(self) -> str:
        width = max((len(n) for n in self.ranking), default=7)
        lines = [f"{'rank':>4}  {'feature':<{width}}  mean|shap|"]
        for i, name in enumerate(self.ranking, start=1):
            lines.append(f"{i:>4}  {name:<{width}}  {self.importance[name]:.6f}")
        return "\n".join(lines) + "\n"


def global_importance(shap: ShapMatrix) -> GlobalImportance:
    if shap.values.shape[0] == 0:
        raise ValueError("cannot rank features from an empty SHAP matrix")
    means = np.abs(shap.values).mean(axis=0)
    importance = {n: float(v) for n, v in zip(shap.feature_names, means)}
    ranking = sorted(shap.feature_names, key=lambda n: (-importance[n], n))
    return GlobalImportance(importance, ranking)
