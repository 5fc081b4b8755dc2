"""Pooling per-point embeddings into one fixed-length global feature.

The global feature is the columnwise mean of the point embeddings followed
by min-max normalization to [0, 1]. Because min-max normalization is
invariant to positive scaling, summing and averaging give the same
normalized feature; the mean is canonical here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCloudError


@dataclass
class GlobalFeature:
    values: np.ndarray        # (k,), each component in [0, 1]
    source_count: int         # number of points aggregated


def sum_pool(embeddings: np.ndarray, canonical: bool = False) -> np.ndarray:
    """Columnwise sum over points. ``canonical`` re-sums in index-sorted
    order of the first column so permutation tests can demand exactness."""
    if embeddings.shape[0] == 0:
        raise EmptyCloudError("cannot pool an empty point cloud")
    if canonical:
        order = np.lexsort(embeddings.T[::-1])
        embeddings = embeddings[order]
    return np.add.reduce(embeddings, axis=0)


def mean_pool(embeddings: np.ndarray, canonical: bool = False) -> np.ndarray:
    if embeddings.shape[0] == 0:
        raise EmptyCloudError("cannot pool an empty point cloud")
    return sum_pool(embeddings, canonical=canonical) / embeddings.shape[0]


def min_max_normalize(v: np.ndarray) -> np.ndarray:
    """(v - min) / (max - min); an all-equal vector maps to all zeros."""
    lo = v.min()
    hi = v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def global_feature(embeddings: np.ndarray, canonical: bool = False
                   ) -> GlobalFeature:
    """min_max_normalize(mean_pool(E)) with provenance of the point count."""
    pooled = mean_pool(embeddings, canonical=canonical)
    return GlobalFeature(min_max_normalize(pooled), embeddings.shape[0])


class GlobalPool:
    """Differentiable mean-pool + rowwise min-max normalize for batches.

    forward: (bs, N, k) -> (bs, k). The min/max are non-smooth; backward
    routes their subgradient to the first argmin/argmax element of each
    row, which keeps training deterministic.
    """

    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def forward(self, e: np.ndarray) -> np.ndarray:
        if e.ndim != 3:
            raise ValueError(f"expected (bs, N, k), got {e.shape}")
        if e.shape[1] == 0:
            raise EmptyCloudError("cannot pool an empty point cloud")
        mean = e.mean(axis=1)                       # (bs, k)
        imin = mean.argmin(axis=1)
        imax = mean.argmax(axis=1)
        rows = np.arange(mean.shape[0])
        lo = mean[rows, imin]
        hi = mean[rows, imax]
        rng_ = hi - lo
        degenerate = rng_ == 0
        safe = np.where(degenerate, 1.0, rng_)
        out = (mean - lo[:, None]) / safe[:, None]
        out[degenerate] = 0.0
        self._cache = (e.shape, imin, imax, safe, degenerate, out)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        shape, imin, imax, rng_, degenerate, out = self._cache
        bs, n, k = shape
        rows = np.arange(bs)
        # y_i = (m_i - lo)/(hi - lo):
        #   dm = dy/rng;  dm[argmin] -= sum(dy)/rng
        #   dm[argmax] -= sum(dy*y)/rng;  dm[argmin] += sum(dy*y)/rng
        dmean = dout / rng_[:, None]
        s_all = dout.sum(axis=1) / rng_
        s_span = (dout * out).sum(axis=1) / rng_
        np.subtract.at(dmean, (rows, imin), s_all)
        np.subtract.at(dmean, (rows, imax), s_span)
        np.add.at(dmean, (rows, imin), s_span)
        dmean[degenerate] = 0.0
        return np.broadcast_to((dmean / n)[:, None, :], (bs, n, k)).astype(
            dout.dtype).copy()
