"""Quantile binning and per-node gradient histograms.

Every feature gets at most ``max_bins`` value bins plus one dedicated missing
bin stored at index ``max_bins``. A value ``x`` lands in bin ``b`` when
``edges[b-1] < x <= edges[b]``, so a split "after bin b" is exactly the
threshold test ``x <= edges[b]``.
"""

from dataclasses import dataclass

import numpy as np


def quantile_edges(values: np.ndarray, max_bins: int) -> np.ndarray:
    """Finite bin upper edges (at most ``max_bins - 1``) from observed values."""
    present = np.sort(values[~np.isnan(values)])
    if len(present) == 0:
        return np.empty(0)
    distinct = np.unique(present)
    if len(distinct) <= max_bins:
        return distinct[:-1].copy()
    idx = (np.arange(1, max_bins) * len(present)) // max_bins
    edges = np.unique(present[idx])
    return edges[edges < distinct[-1]]


@dataclass
class BinMapper:
    edges: list
    max_bins: int

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int) -> "BinMapper":
        return cls([quantile_edges(X[:, j], max_bins) for j in range(X.shape[1])], max_bins)

    @property
    def missing_bin(self) -> int:
        return self.max_bins

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(e) + 1 for e in self.edges])

    def transform(self, X: np.ndarray) -> np.ndarray:
        binned = np.empty(X.shape, dtype=np.uint16)
        for j, edges in enumerate(self.edges):
            col = X[:, j]
            nan = np.isnan(col)
            b = np.searchsorted(edges, np.where(nan, 0.0, col), side="left")
            b[nan] = self.missing_bin
            binned[:, j] = b
        return binned


@dataclass
class Histogram:
    """Gradient sum, hessian sum and count per (feature, bin)."""

    grad: np.ndarray
    hess: np.ndarray
    count: np.ndarray

    def __sub__(self, other: "Histogram") -> "Histogram":
        return Histogram(self.grad - other.grad, self.hess - other.hess, self.count - other.count)

    def totals(self):
        """(G, H, count) of the node, read off the first feature's bins."""
        return float(self.grad[0].sum()), float(self.hess[0].sum()), int(self.count[0].sum())


def build_histogram(
    binned: np.ndarray, rows: np.ndarray, grad: np.ndarray, hess: np.ndarray, width: int
) -> Histogram:
    n_features = binned.shape[1]
    flat = (binned[rows].astype(np.int64) + np.arange(n_features) * width).ravel()
    size = n_features * width
    g = np.repeat(grad[rows], n_features)
    h = np.repeat(hess[rows], n_features)
    shape = (n_features, width)
    return Histogram(
        np.bincount(flat, weights=g, minlength=size).reshape(shape),
        np.bincount(flat, weights=h, minlength=size).reshape(shape),
        np.bincount(flat, minlength=size).reshape(shape),
    )
