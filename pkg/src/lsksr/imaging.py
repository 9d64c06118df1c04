"""Image I/O, color conversion, bicubic resampling, and Y-channel metrics.

Planes are 2-D float64 arrays on the [0, 255] scale unless a function
documents otherwise.  PSNR and SSIM follow the usual SISR evaluation
protocol: BT.601 studio-swing luminance, peak 255, border shave equal to
the scale factor.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image, UnidentifiedImageError

from .errors import InvalidRangeError, InvalidShapeError, ShapeMismatchError, UnsupportedFormatError

PSNR_CAP_DB = 100.0


# -- PNG I/O -----------------------------------------------------------------

def load_png(path) -> np.ndarray:
    """Load an 8-bit gray or RGB PNG as a uint8 array (h, w) or (h, w, 3)."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError) as e:
        raise UnsupportedFormatError(f"{path}: not a readable PNG ({e})")
    if img.mode in ("RGBA", "LA"):
        img = img.convert(img.mode[:-1])  # strip alpha
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode not in ("L", "RGB"):
        raise UnsupportedFormatError(f"{path}: unsupported mode {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def save_png(img: np.ndarray, path) -> None:
    a = np.asarray(img)
    if a.dtype != np.uint8 or a.ndim not in (2, 3) or (a.ndim == 3 and a.shape[2] != 3):
        raise UnsupportedFormatError(f"expected uint8 (h,w) or (h,w,3), got {a.dtype} {a.shape}")
    Image.fromarray(a, mode="L" if a.ndim == 2 else "RGB").save(path, format="PNG")


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """BT.601 studio-swing luminance on the [0, 255] scale.

    Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255.  Gray input passes
    through unchanged.
    """
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.ndim != 3 or a.shape[2] != 3:
        raise InvalidShapeError(f"expected (h,w) or (h,w,3), got {a.shape}")
    r, g, b = a[..., 0], a[..., 1], a[..., 2]
    return 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0


def plane_to_u8(plane: np.ndarray) -> np.ndarray:
    """Round and clip a [0, 255]-scale plane to uint8 samples."""
    return np.clip(np.rint(plane), 0, 255).astype(np.uint8)


# -- bicubic resampling -------------------------------------------------------

def _cubic(x: np.ndarray) -> np.ndarray:
    # Keys cubic convolution kernel with a = -0.5
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    out = np.where(ax <= 1, 1.5 * ax3 - 2.5 * ax2 + 1,
                   np.where(ax < 2, -0.5 * ax3 + 2.5 * ax2 - 4 * ax + 2, 0.0))
    return out


def _resize_weights(in_n: int, out_n: int):
    scale = out_n / in_n
    width = 4.0 / min(scale, 1.0)  # widen kernel on downscale (antialias)
    u = (np.arange(out_n) + 0.5) / scale - 0.5
    left = np.floor(u - width / 2.0)
    taps = int(np.ceil(width)) + 2
    idx = left[:, None] + np.arange(1, taps + 1)
    dist = u[:, None] - idx
    w = _cubic(dist * min(scale, 1.0))
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, in_n - 1).astype(np.intp)  # replicate edges
    return idx, w


def _resize_axis0(plane: np.ndarray, out_n: int) -> np.ndarray:
    idx, w = _resize_weights(plane.shape[0], out_n)
    return np.einsum("ot,otw->ow", w, plane[idx])


def bicubic_resize(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Separable cubic-convolution resize (a = -0.5, antialiased downscale)."""
    p = np.asarray(plane, dtype=np.float64)
    if p.ndim != 2:
        raise InvalidShapeError(f"expected a 2-D plane, got shape {p.shape}")
    if out_w < 1 or out_h < 1:
        raise InvalidShapeError(f"output dims must be >= 1, got {out_w}x{out_h}")
    if (out_h, out_w) == p.shape:
        return p.copy()
    p = _resize_axis0(p, out_h)
    p = _resize_axis0(p.T, out_w).T
    return p


def crop_to_multiple(plane: np.ndarray, s: int) -> np.ndarray:
    h, w = plane.shape
    return plane[: (h // s) * s, : (w // s) * s]


def degrade(hr: np.ndarray, scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Bicubic degradation: (lr, coarse_hr) for an HR plane.

    HR dims must be divisible by the scale (crop_to_multiple first).
    coarse_hr is the LR plane bicubically re-upscaled to the HR grid, the
    input convention of pre-upsampling models.
    """
    hr = np.asarray(hr, dtype=np.float64)
    s = int(scale)
    if s < 1:
        raise InvalidRangeError(f"scale must be >= 1, got {scale}")
    if s == 1:
        return hr.copy(), hr.copy()
    h, w = hr.shape
    if h % s or w % s:
        raise InvalidShapeError(f"HR dims {h}x{w} not divisible by scale {s}")
    lr = bicubic_resize(hr, w // s, h // s)
    coarse = bicubic_resize(lr, w, h)
    return lr, coarse


# -- metrics ------------------------------------------------------------------

def _shaved(a, b, shave):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"plane shapes differ: {a.shape} vs {b.shape}")
    if shave < 0:
        raise InvalidRangeError("shave must be >= 0")
    if shave:
        if min(a.shape) <= 2 * shave:
            raise InvalidShapeError(f"plane {a.shape} too small for shave {shave}")
        a = a[shave:-shave, shave:-shave]
        b = b[shave:-shave, shave:-shave]
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, shave: int = 0) -> float:
    """PSNR in dB on the [0, 255] scale, capped at 100 dB for identical inputs."""
    a, b = _shaved(a, b, shave)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(255.0 ** 2 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, valid mode, one axis at a time
    p = sliding_window_view(p, g.size, axis=0) @ g
    p = sliding_window_view(p, g.size, axis=1) @ g
    return p


def ssim(a: np.ndarray, b: np.ndarray, shave: int = 0) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma=1.5, [0, 255] scale."""
    a, b = _shaved(a, b, shave)
    if min(a.shape) < 11:
        raise InvalidShapeError(f"plane {a.shape} smaller than the 11x11 SSIM window")
    g = _gaussian_window()
    c1, c2 = (0.01 * 255.0) ** 2, (0.03 * 255.0) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# -- patches ------------------------------------------------------------------

def extract_patches(a: np.ndarray, b: np.ndarray, patch: int, stride: int):
    """Aligned (a_patch, b_patch) pairs on a regular grid."""
    if stride < 1:
        raise InvalidRangeError(f"stride must be >= 1, got {stride}")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"plane shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    if patch > h or patch > w:
        raise InvalidShapeError(f"patch {patch} larger than plane {h}x{w}")
    pairs = []
    for i in range(0, h - patch + 1, stride):
        for j in range(0, w - patch + 1, stride):
            pairs.append((a[i:i + patch, j:j + patch].copy(),
                          b[i:i + patch, j:j + patch].copy()))
    return pairs
