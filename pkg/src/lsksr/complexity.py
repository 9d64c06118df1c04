"""Parameter and FLOP accounting for square vs separable convolution layers.

Multiplications and additions are tracked separately (FlopCount.mul /
FlopCount.add) because a multiply costs more than an add on most targets.
All counts are exact integers; ratios are exact rationals.

Reported "G" figures follow the fused multiply-add convention: a bias
contributes one multiply-add per output pixel to both components.  That is
the convention under which the published comparison table for these six
architectures is reproduced within 1%.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidShapeError, InvalidSpecError

SQUARE = "square"
SEPARABLE = "separable"

PRE_BICUBIC = "pre-bicubic"
POST_PIXELSHUFFLE = "post-pixelshuffle"
RESIDUAL_PRE_BICUBIC = "residual-pre-bicubic"


@dataclass(frozen=True)
class FlopCount:
    mul: int = 0
    add: int = 0

    def __add__(self, other: "FlopCount") -> "FlopCount":
        return FlopCount(self.mul + other.mul, self.add + other.add)

    @property
    def total(self) -> int:
        return self.mul + self.add


@dataclass(frozen=True)
class LayerSpec:
    kind: str                 # square | separable
    c_in: int
    c_out: int
    k: int
    c_e: int | None = None    # separable only
    has_bias: bool = True
    activation: str = "identity"

    def __post_init__(self):
        if self.kind not in (SQUARE, SEPARABLE):
            raise InvalidSpecError(f"unknown layer kind {self.kind!r}")
        if self.k < 1 or self.k % 2 == 0:
            raise InvalidSpecError(f"kernel size must be odd, got {self.k}")
        if self.c_in < 1 or self.c_out < 1:
            raise InvalidSpecError("channel counts must be >= 1")
        if self.kind == SEPARABLE and (self.c_e is None or self.c_e < 1):
            raise InvalidSpecError("separable layer needs c_e >= 1")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    upsampling: str = PRE_BICUBIC
    scale: int = 2            # pixel-shuffle factor for post-upsampling

    def __post_init__(self):
        if self.upsampling not in (PRE_BICUBIC, POST_PIXELSHUFFLE, RESIDUAL_PRE_BICUBIC):
            raise InvalidSpecError(f"unknown upsampling scheme {self.upsampling!r}")
        if self.upsampling == POST_PIXELSHUFFLE and self.scale < 2:
            raise InvalidSpecError("post-upsampling requires scale >= 2")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.c_out != b.c_in:
                raise InvalidSpecError(
                    f"channel chain broken: {a.c_out} -> {b.c_in} in {self.name}")


def layer_params(layer: LayerSpec, count_extra_bias: bool = True) -> int:
    """Scalar parameter count of one layer.

    count_extra_bias adds c_e bias terms for the separable extra layer;
    the staged vertical bank is actually bias-free (mergeability), but the
    published totals include them, so the flag defaults on.
    """
    if layer.kind == SQUARE:
        n = layer.c_in * layer.k * layer.k * layer.c_out
        if layer.has_bias:
            n += layer.c_out
    else:
        n = layer.c_in * layer.k * layer.c_e + layer.c_e * layer.k * layer.c_out
        if layer.has_bias:
            n += layer.c_out + (layer.c_e if count_extra_bias else 0)
    return n


def param_count(spec: ModelSpec, count_extra_bias: bool = True) -> int:
    return sum(layer_params(l, count_extra_bias) for l in spec.layers)


def param_ratio(c_prev: int, c_e: int, c_next: int, k: int) -> Fraction:
    """Weight-count ratio separable/square; equals 2/k when channels match."""
    if min(c_prev, c_e, c_next, k) < 1:
        raise InvalidSpecError("all arguments must be >= 1")
    return Fraction(c_prev * k * c_e + c_e * k * c_next, c_prev * k * k * c_next)


def flop_conv(k, c_in, c_out, h, w, kind, c_e=None, bias=False,
              count_extra_bias=True) -> FlopCount:
    """Exact multiply/add counts of one convolution layer on an h x w grid.

    Square: mul = A*wh*k^2, add = A*(wh*(k^2-1)+1) with A = c_in*c_out.
    Separable: the two 1-D banks cost (B+C)*wh*k muls and
    (B+C)*(wh*(k-1)+1) adds with B = c_in*c_e, C = c_e*c_out.
    With bias=True each biased output channel adds wh fused multiply-adds.
    """
    wh = int(w) * int(h)
    if kind == SQUARE:
        A = c_in * c_out
        fc = FlopCount(A * wh * k * k, A * (wh * (k * k - 1) + 1))
        nb = c_out if bias else 0
    elif kind == SEPARABLE:
        if c_e is None or c_e < 1:
            raise InvalidSpecError("separable flops need c_e >= 1")
        B, C = c_in * c_e, c_e * c_out
        fc = FlopCount((B + C) * wh * k, (B + C) * (wh * (k - 1) + 1))
        nb = (c_out + (c_e if count_extra_bias else 0)) if bias else 0
    else:
        raise InvalidSpecError(f"unknown layer kind {kind!r}")
    return fc + FlopCount(nb * wh, nb * wh)


def flop_model(spec: ModelSpec, out_h: int, out_w: int, scale: int | None = None,
               count_extra_bias: bool = True) -> FlopCount:
    """Total FLOPs to produce an out_h x out_w output.

    Pre-upsampling models convolve at the output resolution; post-upsampling
    models convolve at out/scale until the final pixel shuffle.
    """
    if spec.upsampling == POST_PIXELSHUFFLE:
        s = spec.scale if scale is None else scale
        if out_h % s or out_w % s:
            raise InvalidShapeError(f"output {out_h}x{out_w} not divisible by scale {s}")
        h, w = out_h // s, out_w // s
    else:
        h, w = out_h, out_w
    total = FlopCount()
    for l in spec.layers:
        total = total + flop_conv(l.k, l.c_in, l.c_out, h, w, l.kind, c_e=l.c_e,
                                  bias=l.has_bias, count_extra_bias=count_extra_bias)
    return total


def flop_ratios(k: int, wh: int | None = None) -> tuple[Fraction, Fraction]:
    """(alpha, beta): square/separable multiply and add ratios at equal channels.

    alpha = k/2 exactly; beta depends weakly on the grid area and tends to
    (k+1)/2 as wh grows, which is what is returned when wh is None.
    """
    if k < 1:
        raise InvalidSpecError("k must be >= 1")
    alpha = Fraction(k, 2)
    if wh is None:
        beta = Fraction(k + 1, 2)
    else:
        beta = Fraction(wh * (k * k - 1) + 1, 2 * (wh * (k - 1) + 1))
    return alpha, beta


# -- the six reference architectures ----------------------------------------

DEFAULT_WIDTHS = {"n1": 64, "n2": 32, "vdsr": 64}
TOY_WIDTHS = {"n1": 16, "n2": 8, "vdsr": 16}

_VDSR_RE = re.compile(r"^(S-)?VDSR-B(\d+)$")


def model_spec(name: str, scale: int = 2, widths: dict | None = None) -> ModelSpec:
    """Build the declarative spec for one of the six reference architectures.

    Names: SRCNN, S-SRCNN, ESPCN, S-ESPCN, VDSR-B<N>, S-VDSR-B<N>.
    The extra-layer width of every separable layer equals the layer's
    output width (n_fe = n_fm).
    """
    w = dict(DEFAULT_WIDTHS, **(widths or {}))
    n1, n2, nv = w["n1"], w["n2"], w["vdsr"]
    key = name.strip().upper()

    if key in ("SRCNN", "S-SRCNN"):
        sep = key.startswith("S-")
        mid = (LayerSpec(SEPARABLE, n1, n2, 5, c_e=n2, activation="relu") if sep
               else LayerSpec(SQUARE, n1, n2, 5, activation="relu"))
        return ModelSpec(name=key, upsampling=PRE_BICUBIC, layers=(
            LayerSpec(SQUARE, 1, n1, 9, activation="relu"),
            mid,
            LayerSpec(SQUARE, n2, 1, 5),
        ))

    if key in ("ESPCN", "S-ESPCN"):
        if scale < 2:
            raise InvalidSpecError("ESPCN needs an upscale factor >= 2")
        sep = key.startswith("S-")
        mid = (LayerSpec(SEPARABLE, n1, n2, 3, c_e=n2, activation="tanh") if sep
               else LayerSpec(SQUARE, n1, n2, 3, activation="tanh"))
        return ModelSpec(name=key, upsampling=POST_PIXELSHUFFLE, scale=scale, layers=(
            LayerSpec(SQUARE, 1, n1, 5, activation="tanh"),
            mid,
            LayerSpec(SQUARE, n2, scale * scale, 3, activation="sigmoid"),
        ))

    m = _VDSR_RE.match(key)
    if m:
        sep, blocks = bool(m.group(1)), int(m.group(2))
        if blocks < 1:
            raise InvalidSpecError("VDSR needs at least one block")
        body = tuple(
            LayerSpec(SEPARABLE, nv, nv, 3, c_e=nv, activation="relu") if sep
            else LayerSpec(SQUARE, nv, nv, 3, activation="relu")
            for _ in range(blocks))
        return ModelSpec(name=key, upsampling=RESIDUAL_PRE_BICUBIC, layers=(
            (LayerSpec(SQUARE, 1, nv, 3, activation="relu"),)
            + body
            + (LayerSpec(SQUARE, nv, 1, 3),)
        ))

    raise InvalidSpecError(f"unknown model name {name!r}")


MODEL_NAMES = ("SRCNN", "S-SRCNN", "ESPCN", "S-ESPCN")


def table_grid(spec: ModelSpec, grid: int = 512) -> tuple[int, int]:
    """Output dims such that every convolution runs on a grid x grid map.

    The published comparison evaluates all six models with their conv
    stacks on a 512 x 512 grid, so post-upsampling models are charged for
    a 512*r output.
    """
    if spec.upsampling == POST_PIXELSHUFFLE:
        return grid * spec.scale, grid * spec.scale
    return grid, grid


@dataclass
class ComparisonRow:
    normal: str
    separable: str
    params_normal: int
    params_separable: int
    flops_normal: FlopCount
    flops_separable: FlopCount
    decline_params_pct: float = field(init=False)
    decline_flops_pct: float = field(init=False)

    def __post_init__(self):
        self.decline_params_pct = 100.0 * (1.0 - self.params_separable / self.params_normal)
        self.decline_flops_pct = 100.0 * (1.0 - self.flops_separable.mul / self.flops_normal.mul)


def comparison_report(pairs, grid: int = 512, count_extra_bias: bool = True):
    """Rows of (normal, separable) model comparisons on a common conv grid."""
    rows = []
    for normal, separable in pairs:
        fn = flop_model(normal, *table_grid(normal, grid), count_extra_bias=count_extra_bias)
        fs = flop_model(separable, *table_grid(separable, grid), count_extra_bias=count_extra_bias)
        rows.append(ComparisonRow(
            normal=normal.name, separable=separable.name,
            params_normal=param_count(normal, count_extra_bias),
            params_separable=param_count(separable, count_extra_bias),
            flops_normal=fn, flops_separable=fs,
        ))
    return rows
