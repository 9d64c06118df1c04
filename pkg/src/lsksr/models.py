"""Network construction, forward/backward, optimizers, and training.

A Network is built from a ModelSpec: each square layer becomes one conv
node, each separable layer becomes a vertical/horizontal 1-D pair staged
exactly as the mergeable form, activations follow their layer, and the
upsampling scheme adds a final pixel shuffle (post) or a residual add of
the network input (VDSR variants).

Inputs and targets are (n, 1, h, w) float32 tensors on the [0, 1] scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conv
from .complexity import (POST_PIXELSHUFFLE, RESIDUAL_PRE_BICUBIC, SEPARABLE, SQUARE,
                         ModelSpec, LayerSpec, param_count)
from .conv import Conv1DLayer, Conv2DLayer
from .errors import DivergenceError, InvalidSpecError, ShapeMismatchError
from .kernels import SeparablePair, decompose_layer, merge_layers
from .tensor import Rng


class ConvNode:
    """One trainable convolution (square or 1-D) with cached forward input."""

    def __init__(self, layer):
        self.layer = layer
        self._x = None
        self.grad_w = None
        self.grad_b = None

    def forward(self, x):
        self._x = x
        if isinstance(self.layer, Conv2DLayer):
            return conv.conv2d_forward(x, self.layer)
        return conv.conv1d_forward(x, self.layer)

    def backward(self, grad_out):
        if self._x is None:
            raise RuntimeError("backward before forward")
        grad_x, gw, gb = conv.conv_backward(self._x, self.layer, grad_out)
        self.grad_w = gw if self.grad_w is None else self.grad_w + gw
        if gb is not None:
            self.grad_b = gb if self.grad_b is None else self.grad_b + gb
        return grad_x

    def params(self):
        out = [("weight", self.layer, "weights")]
        if self.layer.bias is not None:
            out.append(("bias", self.layer, "bias"))
        return out


class ActNode:
    def __init__(self, kind):
        self.kind = kind
        self._x = None

    def forward(self, x):
        self._x = x
        return conv.activation_forward(x, self.kind)

    def backward(self, grad_out):
        return conv.activation_backward(self._x, self.kind, grad_out)

    def params(self):
        return []


class PixelShuffleNode:
    def __init__(self, r):
        self.r = r

    def forward(self, x):
        return conv.pixel_shuffle(x, self.r)

    def backward(self, grad_out):
        return conv.pixel_unshuffle(grad_out, self.r)

    def params(self):
        return []


class Network:
    """Ordered node chain plus the spec it was built from."""

    def __init__(self, spec: ModelSpec, nodes):
        self.spec = spec
        self.nodes = list(nodes)
        self.residual = spec.upsampling == RESIDUAL_PRE_BICUBIC

    def forward(self, x):
        y = x
        for node in self.nodes:
            y = node.forward(y)
        if self.residual:
            if y.shape != x.shape:
                raise ShapeMismatchError("residual add needs matching in/out shapes")
            y = y + x
        return y

    def backward(self, grad_y):
        g = grad_y
        for node in reversed(self.nodes):
            g = node.backward(g)
        if self.residual:
            g = g + grad_y
        return g

    def zero_grads(self):
        for node in self.nodes:
            if isinstance(node, ConvNode):
                node.grad_w = None
                node.grad_b = None

    def named_params(self):
        """(name, owner, attr) triples; arrays are reachable as getattr(owner, attr)."""
        out = []
        conv_i = 0
        for node in self.nodes:
            if not isinstance(node, ConvNode):
                continue
            tag = f"conv{conv_i}"
            if isinstance(node.layer, Conv1DLayer):
                tag += ".v" if node.layer.orientation == Conv1DLayer.VERTICAL else ".h"
                if node.layer.orientation == Conv1DLayer.HORIZONTAL:
                    conv_i += 1
            else:
                conv_i += 1
            for suffix, owner, attr in node.params():
                out.append((f"{tag}.{suffix}", owner, attr))
        return out

    def param_arrays(self):
        return [getattr(owner, attr) for _, owner, attr in self.named_params()]

    def set_param(self, idx, value):
        _, owner, attr = self.named_params()[idx]
        setattr(owner, attr, np.asarray(value, dtype=np.float32))

    def num_params(self):
        return sum(a.size for a in self.param_arrays())

    def grads(self):
        out = []
        for node in self.nodes:
            if not isinstance(node, ConvNode):
                continue
            out.append(node.grad_w)
            if node.layer.bias is not None:
                out.append(node.grad_b)
        return out

    def conv_nodes(self):
        return [n for n in self.nodes if isinstance(n, ConvNode)]


def build_model(spec: ModelSpec, rng: Rng, init: str = "uniform") -> Network:
    """Allocate and initialize a Network for the given spec.

    init="uniform": weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in))
    per bank (1-D banks use their own fan_in = c_in * k); biases zero.
    init="identity": same noise scaled down by 10x, plus a Dirac path
    through channel 0 of every layer so the fresh network starts as the
    identity map; useful for short desk-scale runs where a from-scratch
    net cannot reach the bicubic baseline within the epoch budget.
    """
    if init not in ("uniform", "identity"):
        raise InvalidSpecError(f"unknown init {init!r}")
    damp = 0.1 if init == "identity" else 1.0
    nodes = []
    for l in spec.layers:
        mid = (l.k - 1) // 2
        if l.kind == SQUARE:
            bound = damp / np.sqrt(l.c_in * l.k * l.k)
            w = rng.uniform(-bound, bound, (l.c_out, l.c_in, l.k, l.k)).copy()
            if init == "identity":
                w[0, 0, mid, mid] += 1.0
            b = np.zeros(l.c_out, dtype=np.float32) if l.has_bias else None
            nodes.append(ConvNode(Conv2DLayer(w, bias=b, padding=conv.SAME)))
        elif l.kind == SEPARABLE:
            if l.c_in == 1 or l.c_out == 1:
                raise InvalidSpecError(
                    "separable layers with a single in/out channel inflate the "
                    "parameter count; use a square layer at the boundary")
            bv = damp / np.sqrt(l.c_in * l.k)
            bh = damp / np.sqrt(l.c_e * l.k)
            vw = rng.uniform(-bv, bv, (l.c_e, l.c_in, l.k)).copy()
            hw = rng.uniform(-bh, bh, (l.c_out, l.c_e, l.k)).copy()
            if init == "identity":
                vw[0, 0, mid] += 1.0
                hw[0, 0, mid] += 1.0
            hb = np.zeros(l.c_out, dtype=np.float32) if l.has_bias else None
            nodes.append(ConvNode(Conv1DLayer(Conv1DLayer.VERTICAL, vw, padding=conv.SAME)))
            nodes.append(ConvNode(Conv1DLayer(Conv1DLayer.HORIZONTAL, hw, bias=hb,
                                              padding=conv.SAME)))
        else:
            raise InvalidSpecError(f"unknown layer kind {l.kind!r}")
        if l.activation != "identity":
            nodes.append(ActNode(l.activation))
    if spec.upsampling == POST_PIXELSHUFFLE:
        nodes.append(PixelShuffleNode(spec.scale))
    return Network(spec, nodes)


def trainable_scalars(net: Network) -> int:
    """Allocated trainable scalars; the construction-side counting oracle.

    Matches param_count(spec, count_extra_bias=False): the staged vertical
    bank genuinely has no bias.
    """
    return net.num_params()


# -- merge / decompose over whole networks ------------------------------------

def _square_version(l: LayerSpec) -> LayerSpec:
    return LayerSpec(SQUARE, l.c_in, l.c_out, l.k, has_bias=l.has_bias,
                     activation=l.activation)


def _separable_version(l: LayerSpec, c_e=None) -> LayerSpec:
    return LayerSpec(SEPARABLE, l.c_in, l.c_out, l.k, c_e=c_e or l.c_out,
                     has_bias=l.has_bias, activation=l.activation)


def merge_network(net: Network) -> tuple[Network, int]:
    """Replace every staged 1-D pair by its merged square layer.

    Returns the merged network and the number of pairs merged (0 means the
    model had no separable layers).
    """
    nodes, new_layers = [], []
    merged = 0
    convs = iter(net.conv_nodes())
    for l in net.spec.layers:
        if l.kind == SEPARABLE:
            v = next(convs).layer
            h = next(convs).layer
            nodes.append(ConvNode(merge_layers(SeparablePair(v, h))))
            new_layers.append(_square_version(l))
            merged += 1
        else:
            nodes.append(ConvNode(next(convs).layer))
            new_layers.append(l)
        if l.activation != "identity":
            nodes.append(ActNode(l.activation))
    spec = ModelSpec(net.spec.name + "+merged" if merged else net.spec.name,
                     tuple(new_layers), net.spec.upsampling, net.spec.scale)
    if spec.upsampling == POST_PIXELSHUFFLE:
        nodes.append(PixelShuffleNode(spec.scale))
    return Network(spec, nodes), merged


def decompose_network(net: Network, c_e: int | None = None):
    """Factorize every eligible square layer (c_in > 1 and c_out > 1).

    Returns (network, per-layer residuals). c_e=None uses the layer's
    output width (the n_fe = n_fm rule).
    """
    nodes, new_layers, residuals = [], [], []
    convs = iter(net.conv_nodes())
    for l in net.spec.layers:
        if l.kind == SQUARE and l.c_in > 1 and l.c_out > 1:
            layer = next(convs).layer
            budget = c_e or l.c_out
            pair, err = decompose_layer(layer, budget)
            nodes.append(ConvNode(pair.vertical))
            nodes.append(ConvNode(pair.horizontal))
            new_layers.append(_separable_version(l, budget))
            residuals.append(err)
        elif l.kind == SEPARABLE:
            nodes.append(ConvNode(next(convs).layer))
            nodes.append(ConvNode(next(convs).layer))
            new_layers.append(l)
        else:
            nodes.append(ConvNode(next(convs).layer))
            new_layers.append(l)
        if l.activation != "identity":
            nodes.append(ActNode(l.activation))
    spec = ModelSpec(net.spec.name + "+decomposed" if residuals else net.spec.name,
                     tuple(new_layers), net.spec.upsampling, net.spec.scale)
    if spec.upsampling == POST_PIXELSHUFFLE:
        nodes.append(PixelShuffleNode(spec.scale))
    return Network(spec, nodes), residuals


# -- optimizers ----------------------------------------------------------------

@dataclass
class LrSchedule:
    """Piecewise-constant learning rate: list of (from_epoch, lr), sorted."""
    steps: list

    def at(self, epoch: int) -> float:
        lr = self.steps[0][1]
        for e0, v in self.steps:
            if epoch >= e0:
                lr = v
        return lr


class SgdMomentum:
    def __init__(self, momentum=0.9):
        self.momentum = momentum
        self._v = None

    def step(self, net: Network, grads, lr):
        names = net.named_params()
        if self._v is None:
            self._v = [np.zeros_like(getattr(o, a)) for _, o, a in names]
        for i, (_, owner, attr) in enumerate(names):
            self._v[i] = self.momentum * self._v[i] + grads[i]
            setattr(owner, attr, (getattr(owner, attr) - lr * self._v[i]).astype(np.float32))


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = None
        self._v = None
        self._t = 0

    def step(self, net: Network, grads, lr):
        names = net.named_params()
        if self._m is None:
            self._m = [np.zeros_like(getattr(o, a), dtype=np.float64) for _, o, a in names]
            self._v = [np.zeros_like(getattr(o, a), dtype=np.float64) for _, o, a in names]
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for i, (_, owner, attr) in enumerate(names):
            g = grads[i].astype(np.float64)
            self._m[i] = b1 * self._m[i] + (1 - b1) * g
            self._v[i] = b2 * self._v[i] + (1 - b2) * g * g
            mhat = self._m[i] / (1 - b1 ** self._t)
            vhat = self._v[i] / (1 - b2 ** self._t)
            upd = lr * mhat / (np.sqrt(vhat) + self.eps)
            setattr(owner, attr, (getattr(owner, attr) - upd).astype(np.float32))


def make_optimizer(kind: str, momentum=0.9, beta1=0.9, beta2=0.999):
    if kind == "sgd-momentum":
        return SgdMomentum(momentum)
    if kind == "adam":
        return Adam(beta1, beta2)
    raise InvalidSpecError(f"unknown optimizer {kind!r}")


def clip_by_global_norm(grads, threshold: float):
    total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if total > threshold > 0:
        scale = threshold / total
        return [g * np.float32(scale) for g in grads], total
    return grads, total


# -- training ------------------------------------------------------------------

@dataclass
class TrainRun:
    seed: int = 0
    epochs: int = 10
    batch_size: int = 16
    loss: str = "mse"
    clip: float | None = None
    # border pixels excluded from the loss and validation PSNR; zero-padded
    # convolutions cannot predict them, so including them just rewards the
    # identity map
    shave: int = 0


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_psnr: float


def _loss_and_grad(y, t, kind, shave=0):
    d = y.astype(np.float64) - t.astype(np.float64)
    if shave:
        mask = np.zeros_like(d)
        mask[:, :, shave:-shave, shave:-shave] = 1.0
        d = d * mask
        n = int(mask.sum())
    else:
        n = d.size
    if kind == "mse":
        loss = float(np.sum(d * d) / n)
        grad = (2.0 / n) * d
    elif kind == "l1":
        loss = float(np.sum(np.abs(d)) / n)
        grad = np.sign(d) / n
    else:
        raise InvalidSpecError(f"unknown loss {kind!r}")
    return loss, grad.astype(np.float32)


def _stack(pairs, idx):
    x = np.stack([pairs[i][0] for i in idx])[:, None, :, :].astype(np.float32)
    t = np.stack([pairs[i][1] for i in idx])[:, None, :, :].astype(np.float32)
    return x, t


def validation_psnr(net: Network, pairs, shave: int = 0) -> float:
    """Mean PSNR over (input, target) patch pairs on the [0, 1] scale."""
    from .imaging import psnr
    vals = []
    for x, t in pairs:
        y = net.forward(np.asarray(x, dtype=np.float32)[None, None])
        vals.append(psnr(np.clip(y[0, 0], 0, 1) * 255.0, np.asarray(t) * 255.0, shave))
    return float(np.mean(vals))


def train(net: Network, dataset, val_set, optimizer, schedule: LrSchedule,
          run: TrainRun, on_epoch=None):
    """Minibatch gradient descent; returns the per-epoch metric log.

    dataset / val_set are lists of (input, target) plane pairs on [0, 1].
    Deterministic for a fixed seed: shuffling comes from the run's own Rng
    and all reductions have a fixed order.
    """
    if not dataset:
        raise InvalidSpecError("empty training set")
    rng = Rng(run.seed)
    log = []
    n = len(dataset)
    for epoch in range(run.epochs):
        lr = schedule.at(epoch)
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, run.batch_size):
            idx = order[s:s + run.batch_size]
            x, t = _stack(dataset, idx)
            net.zero_grads()
            y = net.forward(x)
            if y.shape != t.shape:
                raise ShapeMismatchError(f"output {y.shape} vs target {t.shape}")
            loss, grad = _loss_and_grad(y, t, run.loss, run.shave)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            net.backward(grad)
            grads = net.grads()
            if run.clip:
                grads, _ = clip_by_global_norm(grads, run.clip)
            optimizer.step(net, grads, lr)
            losses.append(loss)
        stats = EpochStats(epoch=epoch, loss=float(np.mean(losses)),
                           val_psnr=validation_psnr(net, val_set, run.shave)
                           if val_set else float("nan"))
        log.append(stats)
        if on_epoch is not None:
            on_epoch(net, stats)
    return log


# -- gradient checking -----------------------------------------------------------

def grad_check(net: Network, x, epsilon: float = 1e-3, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    The probe loss is a fixed random projection of the output.  Numeric
    differences run the whole forward in float64 (parameters stay float32
    but enter the computation exactly), and each difference quotient uses
    the actually-realized float32 perturbation as its denominator.
    """
    x64 = np.asarray(x, dtype=np.float64)
    rng = Rng(seed)
    y0 = net.forward(x64)
    c = rng.uniform(-1.0, 1.0, y0.shape).astype(np.float64)

    net.zero_grads()
    net.forward(x64)
    net.backward(c)
    analytic = [g.astype(np.float64) for g in net.grads()]

    names = net.named_params()
    worst = 0.0
    for i, (_, owner, attr) in enumerate(names):
        theta = getattr(owner, attr)
        flat = theta.ravel()
        num = np.zeros(flat.size, dtype=np.float64)
        for j in range(flat.size):
            orig = flat[j]
            hi = np.float32(orig + epsilon)
            lo = np.float32(orig - epsilon)
            for val, sign in ((hi, 1), (lo, -1)):
                t2 = theta.copy()
                t2.ravel()[j] = val
                setattr(owner, attr, t2)
                yj = net.forward(x64)
                num[j] += sign * float(np.sum(yj * c))
            setattr(owner, attr, theta)
            num[j] /= float(hi) - float(lo)
        a = analytic[i].ravel()
        scale = np.maximum(np.abs(a), np.maximum(np.abs(num), 1e-8))
        worst = max(worst, float(np.max(np.abs(a - num) / scale)))
    return worst
