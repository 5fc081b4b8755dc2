"""Independent brute-force reference implementations used only by tests.

Everything here is written as plain loops over definitions, deliberately
ignoring how the package computes the same quantities.
"""

import numpy as np


def naive_linear(x, w, b):
    n, din = x.shape
    dout = w.shape[1]
    out = np.zeros((n, dout), dtype=np.float64)
    for i in range(n):
        for j in range(dout):
            acc = 0.0
            for k in range(din):
                acc += float(x[i, k]) * float(w[k, j])
            out[i, j] = acc + float(b[j])
    return out


def naive_conv2d(x, kernels, b, stride, pad):
    n, c, h, w = x.shape
    co, _, kh, kw = kernels.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    out = np.zeros((n, co, oh, ow), dtype=np.float64)
    for ni in range(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += float(xp[ni, ci, i * stride + u,
                                                j * stride + v]) * \
                                       float(kernels[o, ci, u, v])
                    out[ni, o, i, j] = acc + float(b[o])
    return out


def naive_maxpool2d(x, window, stride):
    n, c, h, w = x.shape
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for ni in range(n):
        for ci in range(c):
            for i in range(oh):
                for j in range(ow):
                    out[ni, ci, i, j] = x[ni, ci,
                                          i * stride:i * stride + window,
                                          j * stride:j * stride + window].max()
    return out


def naive_fps(points, n, start=0):
    """Recompute the full min-distance-to-selected for every candidate at
    every step. O(n * N^2)."""
    total = len(points)
    chosen = [start]
    for _ in range(1, n):
        best_idx, best_d = None, -1.0
        for cand in range(total):
            d = min(float(np.sum((points[cand] - points[s]) ** 2))
                    for s in chosen)
            if d > best_d:
                best_d, best_idx = d, cand
        chosen.append(best_idx)
    return chosen


def numeric_grad(loss_fn, array, eps=1e-5):
    """Central finite differences of loss_fn() w.r.t. every entry of array
    (mutated in place and restored)."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        lp = loss_fn()
        flat[i] = orig - eps
        lm = loss_fn()
        flat[i] = orig
        grad.reshape(-1)[i] = (lp - lm) / (2 * eps)
    return grad


def naive_miou(gt, pred, parts):
    """Set-arithmetic IoU per part, empty union counts as 1."""
    scores = []
    for part in parts:
        g = {i for i, l in enumerate(gt) if l == part}
        p = {i for i, l in enumerate(pred) if l == part}
        union = g | p
        scores.append(1.0 if not union else len(g & p) / len(union))
    return sum(scores) / len(scores)


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / denom)
