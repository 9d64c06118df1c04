"""Dense NCHW tensors and seeded random initialization.

Tensors are plain ``numpy.float32`` arrays of rank 4 with layout
(batch, channels, height, width), row-major with width fastest.  Arrays
returned by the constructors here are marked read-only; operations never
mutate their inputs.  Reductions elsewhere in the toolkit accumulate in
float64 and cast back to float32.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidRangeError, InvalidShapeError, ShapeMismatchError

Dims = tuple[int, int, int, int]


class Rng:
    """Seeded random source.

    Wraps numpy's PCG64 generator (O'Neill's permuted congruential
    generator, 128-bit state, documented update function), so a given
    64-bit seed yields the same stream on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, lo: float, hi: float, shape) -> np.ndarray:
        u = self._gen.random(shape, dtype=np.float32)
        return (u * np.float32(hi - lo) + np.float32(lo)).astype(np.float32)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def _check_dims(dims) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 4 or any(d < 1 for d in dims):
        raise InvalidShapeError(f"tensor dims must be four positive ints, got {dims}")
    return dims


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    a.flags.writeable = False
    return a


def zeros(dims) -> np.ndarray:
    """All-zero tensor of the given (n, c, h, w) shape."""
    return _freeze(np.zeros(_check_dims(dims), dtype=np.float32))


def tensor(data, dims=None) -> np.ndarray:
    """Build a tensor from nested sequences or an array, validating the shape."""
    a = np.asarray(data, dtype=np.float32)
    if dims is not None:
        a = a.reshape(_check_dims(dims))
    if a.ndim != 4:
        raise InvalidShapeError(f"expected rank-4 data, got rank {a.ndim}")
    _check_dims(a.shape)
    if not np.all(np.isfinite(a)):
        raise InvalidRangeError("tensor data contains NaN/Inf")
    return _freeze(a)


def random_uniform(rng: Rng, dims, lo: float, hi: float) -> np.ndarray:
    """Tensor with i.i.d. samples in [lo, hi); same seed gives identical bits."""
    if not lo < hi:
        raise InvalidRangeError(f"need lo < hi, got [{lo}, {hi})")
    return _freeze(rng.uniform(lo, hi, _check_dims(dims)))


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Elementwise add/sub/mul of two equal-shaped tensors."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        out = a + b
    elif op == "sub":
        out = a - b
    elif op == "mul":
        out = a * b
    else:
        raise ValueError(f"unknown op {op!r}")
    return _freeze(out)
