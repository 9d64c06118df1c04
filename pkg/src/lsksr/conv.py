"""Direct convolution operators: 2-D square, 1-D vertical/horizontal,
activations, and pixel shuffle, each with an exact reverse-mode backward.

Conventions, fixed throughout the toolkit:

* cross-correlation (no kernel flip), stride 1, dilation 1;
* "same" padding zero-pads (k-1)/2 on each side of the convolved axis
  only -- a 1-D layer never pads the orthogonal axis;
* inner products accumulate in float64 and are cast back to float32.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidShapeError, ShapeMismatchError

VALID = "valid"
SAME = "same"


def _check_kernel_size(k: int) -> int:
    k = int(k)
    if k < 1 or k % 2 == 0:
        raise InvalidShapeError(f"kernel size must be odd and positive, got {k}")
    return k


class Conv2DLayer:
    """Square-kernel convolution: weights (c_out, c_in, k, k), optional bias."""

    def __init__(self, weights, bias=None, padding=SAME):
        w = np.asarray(weights, dtype=np.float32)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise InvalidShapeError(f"conv2d weights must be (c_out, c_in, k, k), got {w.shape}")
        _check_kernel_size(w.shape[2])
        if padding not in (VALID, SAME):
            raise ValueError(f"unknown padding {padding!r}")
        self.weights = w
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float32).reshape(w.shape[0])
        self.padding = padding

    @property
    def c_out(self):
        return self.weights.shape[0]

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def k(self):
        return self.weights.shape[2]

    def kernel4d(self):
        return self.weights

    def pad_hw(self):
        p = (self.k - 1) // 2 if self.padding == SAME else 0
        return p, p


class Conv1DLayer:
    """One-dimensional convolution bank, vertical (k x 1) or horizontal (1 x k)."""

    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"

    def __init__(self, orientation, weights, bias=None, padding=SAME):
        if orientation not in (self.VERTICAL, self.HORIZONTAL):
            raise ValueError(f"unknown orientation {orientation!r}")
        w = np.asarray(weights, dtype=np.float32)
        if w.ndim != 3:
            raise InvalidShapeError(f"conv1d weights must be (c_out, c_in, k), got {w.shape}")
        _check_kernel_size(w.shape[2])
        if padding not in (VALID, SAME):
            raise ValueError(f"unknown padding {padding!r}")
        self.orientation = orientation
        self.weights = w
        self.bias = None if bias is None else np.asarray(bias, dtype=np.float32).reshape(w.shape[0])
        self.padding = padding

    @property
    def c_out(self):
        return self.weights.shape[0]

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def k(self):
        return self.weights.shape[2]

    def kernel4d(self):
        c_out, c_in, k = self.weights.shape
        if self.orientation == self.VERTICAL:
            return self.weights.reshape(c_out, c_in, k, 1)
        return self.weights.reshape(c_out, c_in, 1, k)

    def pad_hw(self):
        if self.padding == VALID:
            return 0, 0
        p = (self.k - 1) // 2
        return (p, 0) if self.orientation == self.VERTICAL else (0, p)


def _correlate(x, kernel, pad_hw, bias):
    """Stride-1 cross-correlation of (n,c,h,w) with (c_out,c_in,kh,kw)."""
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = kernel.shape
    if c != c_in:
        raise ShapeMismatchError(f"input has {c} channels, layer expects {c_in}")
    ph, pw = pad_hw
    if h + 2 * ph < kh or w + 2 * pw < kw:
        raise InvalidShapeError(f"input {h}x{w} smaller than kernel {kh}x{kw} under this padding")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    y = np.einsum("bchwuv,ocuv->bohw", win.astype(np.float64), kernel.astype(np.float64))
    if bias is not None:
        y += bias.astype(np.float64)[None, :, None, None]
    # float32 pipelines get float32 out; float64 inputs stay float64 so
    # finite-difference gradient checks can run at full precision
    return y.astype(np.result_type(x.dtype, np.float32))


def conv2d_forward(x: np.ndarray, layer: Conv2DLayer) -> np.ndarray:
    return _correlate(x, layer.kernel4d(), layer.pad_hw(), layer.bias)


def conv1d_forward(x: np.ndarray, layer: Conv1DLayer) -> np.ndarray:
    return _correlate(x, layer.kernel4d(), layer.pad_hw(), layer.bias)


def conv_backward(x: np.ndarray, layer, grad_out: np.ndarray):
    """Gradients of the forward map w.r.t. input, weights, and bias.

    Returns (grad_x, grad_w, grad_b); grad_w has the layer's own weight
    shape and grad_b is None for bias-free layers.
    """
    kernel = layer.kernel4d()
    c_out, c_in, kh, kw = kernel.shape
    ph, pw = layer.pad_hw()
    n, c, h, w = x.shape
    expect = (n, c_out, h + 2 * ph - kh + 1, w + 2 * pw - kw + 1)
    if grad_out.shape != expect:
        raise ShapeMismatchError(f"grad_out shape {grad_out.shape}, expected {expect}")

    g = grad_out.astype(np.float64)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))).astype(np.float64)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    grad_k = np.einsum("bohw,bchwuv->ocuv", g, win)

    gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    gwin = sliding_window_view(gp, (kh, kw), axis=(2, 3))
    kflip = kernel[:, :, ::-1, ::-1].astype(np.float64)
    grad_xp = np.einsum("bohwuv,ocuv->bchw", gwin, kflip)
    dt = np.result_type(x.dtype, grad_out.dtype, np.float32)
    grad_x = grad_xp[:, :, ph:ph + h, pw:pw + w].astype(dt)

    grad_w = grad_k.astype(dt).reshape(layer.weights.shape)
    grad_b = None if layer.bias is None else g.sum(axis=(0, 2, 3)).astype(dt)
    return grad_x, grad_w, grad_b


# -- activations ------------------------------------------------------------

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


def activation_forward(x: np.ndarray, kind: str) -> np.ndarray:
    dt = np.result_type(x.dtype, np.float32)
    if kind == "relu":
        return np.maximum(x, 0).astype(dt)
    if kind == "tanh":
        return np.tanh(x).astype(dt)
    if kind == "sigmoid":
        return (1.0 / (1.0 + np.exp(-x.astype(np.float64)))).astype(dt)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(x: np.ndarray, kind: str, grad_out: np.ndarray) -> np.ndarray:
    if x.shape != grad_out.shape:
        raise ShapeMismatchError(f"shape mismatch: {x.shape} vs {grad_out.shape}")
    dt = np.result_type(x.dtype, grad_out.dtype, np.float32)
    if kind == "relu":
        # derivative at exactly 0 defined as 0
        d = (x > 0).astype(dt)
    elif kind == "tanh":
        t = np.tanh(x.astype(np.float64))
        d = (1.0 - t * t).astype(dt)
    elif kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-x.astype(np.float64)))
        d = (s * (1.0 - s)).astype(dt)
    elif kind == "identity":
        return grad_out
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return (d * grad_out).astype(dt)


# -- pixel shuffle ----------------------------------------------------------

def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (n, c*r^2, h, w) into (n, c, h*r, w*r).

    out[b, c, y*r+i, x*r+j] = in[b, c*r^2 + i*r + j, y, x].
    """
    r = int(r)
    n, c, h, w = x.shape
    if r < 1 or c % (r * r) != 0:
        raise InvalidShapeError(f"{c} channels not divisible by r^2={r * r}")
    co = c // (r * r)
    y = x.reshape(n, co, r, r, h, w)
    y = y.transpose(0, 1, 4, 2, 5, 3)  # n, co, h, r, w, r
    return np.ascontiguousarray(y.reshape(n, co, h * r, w * r))


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Inverse of pixel_shuffle; also the backward map for its gradients."""
    r = int(r)
    n, c, hr, wr = x.shape
    if r < 1 or hr % r != 0 or wr % r != 0:
        raise InvalidShapeError(f"spatial dims ({hr},{wr}) not divisible by r={r}")
    h, w = hr // r, wr // r
    y = x.reshape(n, c, h, r, w, r)
    y = y.transpose(0, 1, 3, 5, 2, 4)  # n, c, r, r, h, w
    return np.ascontiguousarray(y.reshape(n, c * r * r, h, w))
