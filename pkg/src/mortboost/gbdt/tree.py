"""Regression trees on gradient statistics, grown leaf-wise."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from numba import njit

from .histogram import BinMapper, Histogram, build_histogram

LEAF = -1


@dataclass
class TreeNode:
    """Builder-friendly node; a leaf when ``feature`` is None."""

    value: float = 0.0
    cover: float | None = None
    feature: int | None = None
    threshold: float = 0.0
    default_left: bool = True
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @classmethod
    def leaf(cls, value: float, cover: float = 1.0) -> "TreeNode":
        return cls(value=value, cover=cover)

    @classmethod
    def split(cls, feature, threshold, left, right, default_left=True, cover=None) -> "TreeNode":
        return cls(feature=feature, threshold=threshold, left=left, right=right,
                   default_left=default_left, cover=cover)


@dataclass
class Tree:
    """Flat preorder arrays; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    @classmethod
    def from_node(cls, root: TreeNode) -> "Tree":
        rows = []

        def visit(node: TreeNode) -> tuple[int, float]:
            idx = len(rows)
            rows.append(None)
            if node.feature is None:
                cover = 1.0 if node.cover is None else float(node.cover)
                rows[idx] = (LEAF, 0.0, True, -1, -1, float(node.value), cover)
                return idx, cover
            li, lc = visit(node.left)
            ri, rc = visit(node.right)
            cover = lc + rc if node.cover is None else float(node.cover)
            rows[idx] = (int(node.feature), float(node.threshold), bool(node.default_left),
                         li, ri, 0.0, cover)
            return idx, cover

        visit(root)
        cols = list(zip(*rows))
        return cls(
            np.array(cols[0], dtype=np.int64),
            np.array(cols[1], dtype=np.float64),
            np.array(cols[2], dtype=bool),
            np.array(cols[3], dtype=np.int64),
            np.array(cols[4], dtype=np.int64),
            np.array(cols[5], dtype=np.float64),
            np.array(cols[6], dtype=np.float64),
        )

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row; NaN follows ``default_left``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            x = X[idx, self.feature[cur]]
            go_left = np.where(np.isnan(x), self.default_left[cur], x <= self.threshold[cur])
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active[idx] = self.feature[node[idx]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] == LEAF:
                nodes.append({"id": i, "leaf": float(self.value[i]), "cover": float(self.cover[i])})
            else:
                nodes.append({
                    "id": i,
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "default_left": bool(self.default_left[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "cover": float(self.cover[i]),
                })
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        nodes = data["nodes"]
        n = len(nodes)
        t = cls(
            np.full(n, LEAF, dtype=np.int64), np.zeros(n), np.ones(n, dtype=bool),
            np.full(n, -1, dtype=np.int64), np.full(n, -1, dtype=np.int64), np.zeros(n), np.zeros(n),
        )
        for i, nd in enumerate(nodes):
            if nd["id"] != i:
                raise ValueError("tree nodes must be listed in preorder with consecutive ids")
            t.cover[i] = nd["cover"]
            if "leaf" in nd:
                t.value[i] = nd["leaf"]
            else:
                t.feature[i] = nd["feature"]
                t.threshold[i] = nd["threshold"]
                t.default_left[i] = nd["default_left"]
                t.left[i] = nd["left"]
                t.right[i] = nd["right"]
        return t


# --------------------------------------------------------------------------
# growth


@dataclass
class SplitInfo:
    gain: float
    feature: int
    bin: int
    default_left: bool


@dataclass
class _GrowNode:
    rows: np.ndarray
    hist: Histogram
    depth: int
    grad_sum: float
    hess_sum: float
    split: SplitInfo | None = None
    children: tuple = ()
    uid: int = 0


@njit(cache=True)
def _gain(lg, lh, lc, G, H, C, parent, lam, gamma, min_samples, min_hess):
    rg, rh, rc = G - lg, H - lh, C - lc
    if lc < min_samples or rc < min_samples or lh < min_hess or rh < min_hess:
        return -np.inf
    if lh + lam <= 0.0 or rh + lam <= 0.0:
        return -np.inf
    return 0.5 * (lg * lg / (lh + lam) + rg * rg / (rh + lam) - parent) - gamma


@njit(cache=True)
def _split_kernel(g, h, c, n_bins, missing_bin, lam, gamma, min_samples, min_hess):
    # Boundaries are scanned feature by feature, bin by bin, and only a
    # strictly larger gain replaces the incumbent, so ties keep the earliest.
    best_gain, best_f, best_b, best_left = 0.0, -1, -1, True
    for f in range(g.shape[0]):
        G = 0.0
        H = 0.0
        C = 0
        for b in range(g.shape[1]):
            G += g[f, b]
            H += h[f, b]
            C += c[f, b]
        gm, hm, cm = g[f, missing_bin], h[f, missing_bin], c[f, missing_bin]
        parent = G * G / (H + lam) if H + lam > 0.0 else 0.0
        gl = 0.0
        hl = 0.0
        cl = 0
        for b in range(n_bins[f] - 1):
            gl += g[f, b]
            hl += h[f, b]
            cl += c[f, b]
            gain_right = _gain(gl, hl, cl, G, H, C, parent, lam, gamma, min_samples, min_hess)
            if cm > 0:
                gain_left = _gain(gl + gm, hl + hm, cl + cm, G, H, C, parent, lam, gamma, min_samples, min_hess)
                left = gain_left >= gain_right
                gain = gain_left if left else gain_right
            else:
                left = hl >= H - hl
                gain = gain_right
            if gain > best_gain:
                best_gain, best_f, best_b, best_left = gain, f, b, left
    return best_gain, best_f, best_b, best_left


def find_best_split(hist: Histogram, n_bins: np.ndarray, missing_bin: int, params) -> SplitInfo | None:
    """Best (feature, bin boundary, missing side) by second-order gain.

    The missing bin is tried on both sides; when a node has no missing values
    the default goes to the child with the larger hessian cover. Only splits
    with strictly positive gain are returned.
    """
    gain, f, b, left = _split_kernel(
        hist.grad, hist.hess, hist.count, np.asarray(n_bins, dtype=np.int64), missing_bin,
        float(params.lambda_l2), float(params.gamma), int(params.min_samples_leaf),
        float(params.min_hessian_leaf),
    )
    if f < 0:
        return None
    return SplitInfo(float(gain), int(f), int(b), bool(left))


def grow_tree(
    binned: np.ndarray,
    mapper: BinMapper,
    grad: np.ndarray,
    hess: np.ndarray,
    params,
    rows: np.ndarray | None = None,
) -> Tree:
    """Fit one tree by repeatedly splitting the leaf with the largest gain."""
    width = mapper.max_bins + 1
    n_bins = mapper.n_bins
    if rows is None:
        rows = np.arange(binned.shape[0])
    max_depth = params.max_depth if params.max_depth is not None else np.inf
    counter = 0

    def make(node_rows, hist, depth):
        nonlocal counter
        node = _GrowNode(node_rows, hist, depth, float(grad[node_rows].sum()), float(hess[node_rows].sum()), uid=counter)
        counter += 1
        if depth < max_depth and len(node_rows) >= 2 * params.min_samples_leaf:
            node.split = find_best_split(hist, n_bins, mapper.missing_bin, params)
        return node

    root = make(rows, build_histogram(binned, rows, grad, hess, width), 0)
    heap = []
    if root.split is not None:
        heap.append((-root.split.gain, root.uid, root))
    n_leaves = 1
    while heap and n_leaves < params.max_leaves:
        _, _, node = heapq.heappop(heap)
        s = node.split
        col = binned[node.rows, s.feature]
        missing = col == mapper.missing_bin
        go_left = np.where(missing, s.default_left, col <= s.bin)
        left_rows, right_rows = node.rows[go_left], node.rows[~go_left]
        if len(left_rows) <= len(right_rows):
            lh = build_histogram(binned, left_rows, grad, hess, width)
            rh = node.hist - lh
        else:
            rh = build_histogram(binned, right_rows, grad, hess, width)
            lh = node.hist - rh
        node.hist = None
        left = make(left_rows, lh, node.depth + 1)
        right = make(right_rows, rh, node.depth + 1)
        node.children = (left, right)
        n_leaves += 1
        for child in (left, right):
            if child.split is not None:
                heapq.heappush(heap, (-child.split.gain, child.uid, child))

    def to_builder(node: _GrowNode) -> TreeNode:
        if not node.children:
            value = -params.learning_rate * node.grad_sum / (node.hess_sum + params.lambda_l2)
            return TreeNode.leaf(value, node.hess_sum)
        s = node.split
        return TreeNode.split(
            s.feature,
            float(mapper.edges[s.feature][s.bin]),
            to_builder(node.children[0]),
            to_builder(node.children[1]),
            default_left=s.default_left,
        )

    return Tree.from_node(to_builder(root))
