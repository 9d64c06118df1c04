"""Separable-kernel algebra.

A separable (rank-1) kernel is the outer product of a column and a row
vector.  A layer of such kernels is realized as two stacked 1-D banks: a
vertical bank (c_in -> c_e, k x 1, bias-free) followed by a horizontal
bank (c_e -> c_out, 1 x k, carries the bias).  Because no activation sits
between the two banks, the pair merges exactly into one square-kernel
layer whose per-channel kernels are sums of c_e outer products; the
reverse direction is a truncated SVD of the folded weight tensor.
"""

from __future__ import annotations

import numpy as np

from .conv import SAME, Conv1DLayer, Conv2DLayer
from .errors import InvalidLayerError, InvalidRangeError, ShapeMismatchError


class SeparablePair:
    """One LSK layer staged as vertical-then-horizontal 1-D banks."""

    def __init__(self, vertical: Conv1DLayer, horizontal: Conv1DLayer):
        if vertical.orientation != Conv1DLayer.VERTICAL:
            raise InvalidLayerError("first bank must be vertical (k x 1)")
        if horizontal.orientation != Conv1DLayer.HORIZONTAL:
            raise InvalidLayerError("second bank must be horizontal (1 x k)")
        if vertical.k != horizontal.k:
            raise InvalidLayerError(f"kernel sizes differ: {vertical.k} vs {horizontal.k}")
        if vertical.c_out != horizontal.c_in:
            raise InvalidLayerError(
                f"extra-layer width mismatch: {vertical.c_out} vs {horizontal.c_in}")
        if vertical.bias is not None:
            raise InvalidLayerError("vertical bank must be bias-free to stay mergeable")
        if vertical.padding != horizontal.padding:
            raise InvalidLayerError("both banks must use the same padding mode")
        self.vertical = vertical
        self.horizontal = horizontal

    @property
    def c_in(self):
        return self.vertical.c_in

    @property
    def c_e(self):
        return self.vertical.c_out

    @property
    def c_out(self):
        return self.horizontal.c_out

    @property
    def k(self):
        return self.vertical.k


def merge_pair(u, v) -> np.ndarray:
    """Outer product of a column vector and a row vector: one rank-<=1 kernel."""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.size != v.size:
        raise ShapeMismatchError(f"vector lengths differ: {u.size} vs {v.size}")
    return np.outer(u, v)


def merge_layers(pair: SeparablePair) -> Conv2DLayer:
    """Collapse the two 1-D banks into the equivalent square-kernel layer.

    merged[i, t] = sum_j outer(vertical[j, t], horizontal[i, j]); the
    horizontal bias carries over unchanged.
    """
    vw = pair.vertical.weights.astype(np.float64)    # (c_e, c_in, k)
    hw = pair.horizontal.weights.astype(np.float64)  # (c_out, c_e, k)
    merged = np.einsum("jtu,ojv->otuv", vw, hw)
    return Conv2DLayer(merged.astype(np.float32), bias=pair.horizontal.bias,
                       padding=pair.vertical.padding)


def _normalize_sign(u, v):
    nz = np.flatnonzero(u)
    if nz.size and u[nz[0]] < 0:
        return -u, -v
    return u, v


def svd_factorize(kernel, r: int):
    """Best rank-r expansion of a square kernel as outer-product factors.

    Returns (factors, residual_norm) where factors is a list of (u, v)
    pairs in descending singular-value order, the singular value folded
    into u, and residual_norm the Frobenius norm of the remainder.
    """
    K = np.asarray(kernel, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeMismatchError(f"expected square matrix, got {K.shape}")
    n = K.shape[0]
    if not 1 <= r <= n:
        raise InvalidRangeError(f"rank budget {r} outside [1, {n}]")
    U, s, Vt = np.linalg.svd(K)
    factors = []
    for i in range(r):
        u, v = _normalize_sign(U[:, i], Vt[i])
        factors.append((s[i] * u, v.copy()))
    residual = float(np.sqrt(np.sum(s[r:] ** 2)))
    return factors, residual


def decompose_layer(layer: Conv2DLayer, c_e: int):
    """Factorize a square-kernel layer into a SeparablePair at width c_e.

    The (c_out, c_in, k, k) weights fold into a (c_in*k) x (c_out*k)
    matrix whose exact rank-c_e factorizations are precisely the staged
    two-bank computations; we take the truncated SVD.  Returns the pair
    and the Frobenius-norm approximation error of the merged round trip.
    """
    c_e = int(c_e)
    if c_e < 1:
        raise InvalidRangeError(f"channel budget must be >= 1, got {c_e}")
    W = layer.weights.astype(np.float64)  # (c_out, c_in, k, k)
    c_out, c_in, k, _ = W.shape
    # M[(t,u), (o,v)] = W[o,t,u,v]
    M = W.transpose(1, 2, 0, 3).reshape(c_in * k, c_out * k)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    rank = min(c_e, s.size)
    vw = np.zeros((c_e, c_in, k), dtype=np.float32)
    hw = np.zeros((c_out, c_e, k), dtype=np.float32)
    for j in range(rank):
        a, b = _normalize_sign(U[:, j], Vt[j])
        vw[j] = (s[j] * a).reshape(c_in, k).astype(np.float32)
        hw[:, j, :] = b.reshape(c_out, k).astype(np.float32)
    error = float(np.sqrt(np.sum(s[rank:] ** 2)))
    pair = SeparablePair(
        Conv1DLayer(Conv1DLayer.VERTICAL, vw, bias=None, padding=layer.padding),
        Conv1DLayer(Conv1DLayer.HORIZONTAL, hw, bias=layer.bias, padding=layer.padding),
    )
    return pair, error


def random_pair(rng, c_in, c_e, c_out, k, padding=SAME, bias=True, scale=0.5):
    """Random SeparablePair, for tests and initialization helpers."""
    vw = rng.uniform(-scale, scale, (c_e, c_in, k))
    hw = rng.uniform(-scale, scale, (c_out, c_e, k))
    b = rng.uniform(-scale, scale, (c_out,)) if bias else None
    return SeparablePair(
        Conv1DLayer(Conv1DLayer.VERTICAL, vw, bias=None, padding=padding),
        Conv1DLayer(Conv1DLayer.HORIZONTAL, hw, bias=b, padding=padding),
    )
