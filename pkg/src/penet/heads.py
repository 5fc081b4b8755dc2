"""Decoder heads consuming the global feature.

Classification reshapes the k-dim global feature into a g x g grid
(g = sqrt(k), 32 for the default k=1024) and runs a small 2D CNN over it.
Segmentation concatenates the cloud's global feature with each point's
128-wide intermediate encoder feature and applies a shared per-point MLP.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, EmptyCloudError
from .numcore import Conv2d, Linear, MaxPool2d, ParamTensor, ReLU


def grid_side(k: int) -> int:
    g = math.isqrt(k)
    if g * g != k:
        raise DimensionError(f"feature length {k} is not a perfect square")
    return g


def reshape_grid(feature: np.ndarray) -> np.ndarray:
    """(k,) -> (1, g, g), row-major; a pure view, so gradients pass through."""
    g = grid_side(feature.shape[-1])
    return feature.reshape(feature.shape[:-1] + (1, g, g))


def predict(logits: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest class index."""
    return np.argmax(logits, axis=-1)


class ClassHead:
    """conv(1->16) + pool, conv(16->32) + pool, fc 256, fc num_classes."""

    def __init__(self, k: int, num_classes: int, rng: np.random.Generator,
                 dtype=np.float32):
        g = grid_side(k)
        if g // 4 < 1:
            raise DimensionError(f"grid {g}x{g} too small for two 2x2 pools")
        self.k = k
        self.num_classes = num_classes
        self.conv1 = Conv2d(1, 16, 3, rng, pad=1, name="head.conv1", dtype=dtype)
        self.relu1 = ReLU()
        self.pool1 = MaxPool2d(2)
        self.conv2 = Conv2d(16, 32, 3, rng, pad=1, name="head.conv2", dtype=dtype)
        self.relu2 = ReLU()
        self.pool2 = MaxPool2d(2)
        self._flat_dim = 32 * (g // 4) * (g // 4)
        self.fc1 = Linear(self._flat_dim, 256, rng, name="head.fc1", dtype=dtype)
        self.relu3 = ReLU()
        self.fc2 = Linear(256, num_classes, rng, name="head.fc2", dtype=dtype)
        self._conv_out_shape = None

    def params(self) -> list[ParamTensor]:
        return (self.conv1.params() + self.conv2.params()
                + self.fc1.params() + self.fc2.params())

    def forward(self, grid: np.ndarray) -> np.ndarray:
        """(bs, 1, g, g) -> (bs, num_classes)."""
        h = self.pool1.forward(self.relu1.forward(self.conv1.forward(grid)))
        h = self.pool2.forward(self.relu2.forward(self.conv2.forward(h)))
        self._conv_out_shape = h.shape
        h = h.reshape(h.shape[0], -1)
        h = self.relu3.forward(self.fc1.forward(h))
        return self.fc2.forward(h)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        g = self.fc1.backward(self.relu3.backward(self.fc2.backward(dlogits)))
        g = g.reshape(self._conv_out_shape)
        g = self.conv2.backward(self.relu2.backward(self.pool2.backward(g)))
        g = self.conv1.backward(self.relu1.backward(self.pool1.backward(g)))
        return g


class SegHead:
    """Shared per-point MLP over concat(global feature, local feature)."""

    def __init__(self, k: int, local_dim: int, num_parts: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.k = k
        self.local_dim = local_dim
        self.num_parts = num_parts
        self.fc1 = Linear(k + local_dim, 256, rng, name="seg.fc1", dtype=dtype)
        self.relu1 = ReLU()
        self.fc2 = Linear(256, 128, rng, name="seg.fc2", dtype=dtype)
        self.relu2 = ReLU()
        self.fc3 = Linear(128, num_parts, rng, name="seg.fc3", dtype=dtype)
        self._layout = None

    def params(self) -> list[ParamTensor]:
        return self.fc1.params() + self.fc2.params() + self.fc3.params()

    def forward(self, point_feats: np.ndarray, global_feat: np.ndarray
                ) -> np.ndarray:
        """(bs, N, local_dim) + (bs, k) -> (bs, N, num_parts)."""
        bs, n, d = point_feats.shape
        if n == 0:
            raise EmptyCloudError("cannot segment an empty point cloud")
        if d != self.local_dim or global_feat.shape != (bs, self.k):
            raise DimensionError(
                f"seg head wants local ({bs}, N, {self.local_dim}) and global "
                f"({bs}, {self.k}); got {point_feats.shape}, {global_feat.shape}")
        fused = np.concatenate(
            [np.repeat(global_feat[:, None, :], n, axis=1), point_feats],
            axis=2).reshape(bs * n, self.k + d)
        self._layout = (bs, n)
        h = self.relu1.forward(self.fc1.forward(fused))
        h = self.relu2.forward(self.fc2.forward(h))
        return self.fc3.forward(h).reshape(bs, n, self.num_parts)

    def backward(self, dlogits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Returns (d_point_feats (bs, N, local_dim), d_global (bs, k))."""
        bs, n = self._layout
        g = dlogits.reshape(bs * n, self.num_parts)
        g = self.fc1.backward(self.relu1.backward(
            self.fc2.backward(self.relu2.backward(self.fc3.backward(g)))))
        g = g.reshape(bs, n, self.k + self.local_dim)
        d_global = g[:, :, :self.k].sum(axis=1)
        d_local = np.ascontiguousarray(g[:, :, self.k:])
        return d_local, d_global
