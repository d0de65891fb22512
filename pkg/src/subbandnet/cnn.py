"""LeNet-style CNN in numpy: build, forward/backward, SGD, evaluation,
parameter accounting, gradient checking and checkpoints.

Tensors are NCHW. Convolutions are 5x5, valid, stride 1 (im2col + GEMM);
pooling is 2x2/2 with a trailing size-1 window on odd axes. The output
layer is a softmax trained with mean cross-entropy.
"""
from __future__ import annotations

import copy
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BadMagic, EmptyDataset, ShapeMismatch, ShapeUnderflow, TruncatedFile
from .qnum import RoundingSchedule

NUM_CLASSES = 10


class Conv2D:
    kind = "conv"
    trainable = True

    def __init__(self, out_channels, kernel=5):
        self.out_channels = out_channels
        self.kernel = kernel
        self.weight = None
        self.bias = None

    def out_shape(self, in_shape):
        c, h, w = in_shape
        oh, ow = h - self.kernel + 1, w - self.kernel + 1
        if oh < 1 or ow < 1:
            raise ShapeUnderflow(f"{self.kernel}x{self.kernel} valid conv on {h}x{w} leaves no output")
        return (self.out_channels, oh, ow)

    def init_params(self, in_shape, rng, dtype):
        c = in_shape[0]
        k2 = self.kernel * self.kernel
        bound = math.sqrt(6.0 / (c * k2 + self.out_channels * k2))
        shape = (self.out_channels, c, self.kernel, self.kernel)
        self.weight = rng.uniform(-bound, bound, size=shape).astype(dtype)
        self.bias = np.zeros(self.out_channels, dtype=dtype)

    def forward(self, x):
        n, _, h, w = x.shape
        f, k = self.out_channels, self.kernel
        oh, ow = h - k + 1, w - k + 1
        cols = kernels.im2col(x, k)
        y = cols @ self.weight.reshape(f, -1).T
        y += self.bias
        y = np.ascontiguousarray(y.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))
        return y, (cols, x.shape)

    def backward(self, dy, cache, need_dx=True):
        cols, x_shape = cache
        f = self.out_channels
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, f)
        dw = (dy2.T @ cols).reshape(self.weight.shape)
        db = dy2.sum(axis=0)
        dx = None
        if need_dx:
            dx = kernels.col2im(dy2 @ self.weight.reshape(f, -1), x_shape, self.kernel)
        return dx, [dw, db]


class MaxPool2D:
    kind = "pool"
    trainable = False
    window = 2
    stride = 2

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, (h + 1) // 2, (w + 1) // 2)

    def forward(self, x):
        y, arg = kernels.maxpool_forward(x)
        return y, (arg, x.shape)

    def backward(self, dy, cache, need_dx=True):
        arg, x_shape = cache
        return kernels.maxpool_backward(dy, arg, x_shape), []


class ReLU:
    kind = "relu"
    trainable = False

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache, need_dx=True):
        return dy * cache, []


class Dense:
    """Fully connected layer; flattens its input. Weight is (in, out)."""

    kind = "dense"
    trainable = True

    def __init__(self, units):
        self.units = units
        self.weight = None
        self.bias = None

    def out_shape(self, in_shape):
        return (self.units,)

    def init_params(self, in_shape, rng, dtype):
        fan_in = int(np.prod(in_shape))
        bound = math.sqrt(6.0 / (fan_in + self.units))
        self.weight = rng.uniform(-bound, bound, size=(fan_in, self.units)).astype(dtype)
        self.bias = np.zeros(self.units, dtype=dtype)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        y = flat @ self.weight
        y += self.bias
        return y, (flat, x.shape)

    def backward(self, dy, cache, need_dx=True):
        flat, x_shape = cache
        dw = flat.T @ dy
        db = dy.sum(axis=0)
        dx = (dy @ self.weight.T).reshape(x_shape) if need_dx else None
        return dx, [dw, db]


class Softmax:
    kind = "softmax"
    trainable = False

    def __init__(self, classes=NUM_CLASSES):
        self.classes = classes

    def out_shape(self, in_shape):
        if in_shape != (self.classes,):
            raise ShapeMismatch(f"softmax expects {self.classes} logits, got {in_shape}")
        return in_shape

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        return p, p


class Network:
    """An ordered layer list with build-time shape inference.

    ``shapes[i]`` is the per-sample output shape of ``layers[i]``.
    """

    def __init__(self, layers, input_shape, rng=None, dtype=np.float32):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ValueError("the last layer must be Softmax")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.shapes = []
        shape = self.input_shape
        for layer in self.layers:
            if layer.trainable:
                layer.init_params(shape, rng, self.dtype)
            shape = layer.out_shape(shape)
            self.shapes.append(shape)

    def trainable_layers(self):
        return [layer for layer in self.layers if layer.trainable]

    def param_groups(self):
        return [[layer.weight, layer.bias] for layer in self.trainable_layers()]

    def params(self):
        return [t for group in self.param_groups() for t in group]

    def copy(self):
        return copy.deepcopy(self)

    def astype(self, dtype):
        net = self.copy()
        net.dtype = np.dtype(dtype)
        for layer in net.trainable_layers():
            layer.weight = layer.weight.astype(dtype)
            layer.bias = layer.bias.astype(dtype)
        return net

    def describe(self):
        parts = []
        for layer, shape in zip(self.layers, self.shapes):
            parts.append(f"{layer.kind}->{'x'.join(map(str, shape))}")
        return " | ".join(parts)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 64
    hidden_units: int = 500
    seed: int = 0
    word_bits: int = 32
    schedule: RoundingSchedule = RoundingSchedule.NONE

    def __post_init__(self):
        self.schedule = RoundingSchedule.parse(self.schedule)
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def build_lenet(input_shape, conv_channels=(20, 50), hidden_units=500, rng=None, dtype=np.float32):
    """conv5-relu-pool, conv5-relu-pool, dense-relu, dense(10)-softmax."""
    c1, c2 = conv_channels
    layers = [
        Conv2D(c1), ReLU(), MaxPool2D(),
        Conv2D(c2), ReLU(), MaxPool2D(),
        Dense(hidden_units), ReLU(),
        Dense(NUM_CLASSES), Softmax(),
    ]
    return Network(layers, input_shape, rng=rng, dtype=dtype)


def _check_batch(network, batch):
    if batch.ndim != 4 or tuple(batch.shape[1:]) != network.input_shape:
        raise ShapeMismatch(f"batch shape {batch.shape} does not match network input {network.input_shape}")


def forward(network, batch):
    """Returns ``(cache, probabilities)``; probabilities is ``(N, 10)``."""
    x = np.asarray(batch, dtype=network.dtype)
    _check_batch(network, x)
    cache = []
    for layer in network.layers:
        x, c = layer.forward(x)
        cache.append(c)
    return cache, x


def backward(network, cache, labels):
    """Gradients of the mean cross-entropy, one array per ``network.params()`` entry."""
    labels = np.asarray(labels)
    probs = cache[-1]
    n = probs.shape[0]
    if labels.shape != (n,) or len(cache) != len(network.layers):
        raise ShapeMismatch("labels/cache do not match the forward pass")
    d = probs.copy()
    d[np.arange(n), labels] -= 1
    d /= n
    grads = []
    for i in range(len(network.layers) - 2, -1, -1):
        layer = network.layers[i]
        d, g = layer.backward(d, cache[i], need_dx=i > 0)
        if g:
            grads.append(g)
    return [t for g in reversed(grads) for t in g]


def sgd_step(network, grads, learning_rate):
    params = network.params()
    if len(grads) != len(params):
        raise ShapeMismatch(f"{len(grads)} gradients for {len(params)} parameters")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
    lr = network.dtype.type(learning_rate)
    for p, g in zip(params, grads):
        p -= lr * g
    return network


def cross_entropy(probs, labels):
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(probs.dtype).tiny))))


def train_epoch(network, dataset, config: TrainConfig, rng, probs_out=None):
    """One shuffled pass in minibatches; the last partial batch is kept.

    Returns ``(network, train_error)`` where the error counts predictions
    made during the pass, before each batch's update. If ``probs_out`` is
    given, each sample's softmax row from that pass is written to it.
    """
    images, labels = dataset.images, dataset.labels
    n = len(labels)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    order = rng.permutation(n)
    wrong = 0
    for start in range(0, n, config.batch_size):
        idx = order[start:start + config.batch_size]
        y = labels[idx]
        cache, probs = forward(network, images[idx])
        wrong += int(np.count_nonzero(probs.argmax(axis=1) != y))
        if probs_out is not None:
            probs_out[idx] = probs
        grads = backward(network, cache, y)
        sgd_step(network, grads, config.learning_rate)
    return network, wrong / n


def predict_proba(network, images, batch_size=500):
    n = len(images)
    out = np.empty((n, NUM_CLASSES), dtype=network.dtype)
    for start in range(0, n, batch_size):
        _, out[start:start + batch_size] = forward(network, images[start:start + batch_size])
    return out


def error_rate(probs, labels):
    """Fraction misclassified; argmax ties go to the lowest class index."""
    return float(np.count_nonzero(np.argmax(probs, axis=1) != labels)) / len(labels)


def evaluate(network, dataset, batch_size=500):
    if len(dataset.labels) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    return error_rate(predict_proba(network, dataset.images, batch_size), dataset.labels)


def param_count(network):
    return sum(int(p.size) for p in network.params())


# -- gradient checking -------------------------------------------------------

def relative_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_gradient(f, x, h=1e-3):
    """Central differences of scalar ``f()`` w.r.t. array ``x``, perturbed in place."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        grad.reshape(-1)[i] = (fp - fm) / (2 * h)
    return grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: list = field(default_factory=list)
    tolerance: float = 1e-4
    kink_crossings: int = 0  # perturbations that flipped a ReLU sign or a pool argmax

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def _activation_pattern(network, cache):
    parts = []
    for layer, c in zip(network.layers, cache):
        if isinstance(layer, ReLU):
            parts.append(np.packbits(c).tobytes())
        elif isinstance(layer, MaxPool2D):
            parts.append(c[0].tobytes())
    return b"".join(parts)


def gradient_check(network, sample, tolerance=1e-4, h=1e-3):
    """Compare backprop against central differences in float64.

    ``sample`` is ``(images, labels)``. The network is copied, never mutated.
    ``kink_crossings`` counts perturbations that changed the ReLU/max-pool
    pattern; central differences are not a valid reference across a kink.
    """
    images, labels = sample
    net = network.astype(np.float64)
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)

    cache, _ = forward(net, images)
    analytic = backward(net, cache, labels)
    pattern = _activation_pattern(net, cache)
    crossings = 0

    def loss():
        nonlocal crossings
        c, probs = forward(net, images)
        crossings += _activation_pattern(net, c) != pattern
        return cross_entropy(probs, labels)

    per_param = []
    for p, g in zip(net.params(), analytic):
        num = numeric_gradient(loss, p, h)
        per_param.append(float(relative_error(g, num).max()))
    return GradCheckReport(max(per_param), per_param, tolerance, crossings)


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_MAGIC = b"LPNN"
CHECKPOINT_VERSION = 1


def save_checkpoint(network, path, word_bits=32):
    """Header: magic, version, word_bits, trainable-layer count (u32 LE).

    Then per tensor (weight, bias for each trainable layer): rank, dims, float32 data.
    """
    groups = network.param_groups()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<III", CHECKPOINT_VERSION, word_bits, len(groups)))
        for group in groups:
            for t in group:
                fh.write(struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
                fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(network, path):
    """Load weights into ``network`` (same architecture). Returns ``word_bits``."""
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not an LPNN checkpoint")
    try:
        version, word_bits, n_layers = struct.unpack_from("<III", raw, 4)
        if version != CHECKPOINT_VERSION:
            raise BadMagic(f"{path}: unsupported checkpoint version {version}")
        groups = network.param_groups()
        if n_layers != len(groups):
            raise ShapeMismatch(f"checkpoint has {n_layers} layers, network has {len(groups)}")
        off = 16
        for group in groups:
            for t in group:
                (rank,) = struct.unpack_from("<I", raw, off)
                dims = struct.unpack_from(f"<{rank}I", raw, off + 4)
                off += 4 + 4 * rank
                if tuple(dims) != t.shape:
                    raise ShapeMismatch(f"checkpoint tensor {dims} != network tensor {t.shape}")
                count = int(np.prod(dims))
                if off + 4 * count > len(raw):
                    raise TruncatedFile(f"{path}: tensor data runs past end of file")
                t[...] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(dims)
                off += 4 * count
    except struct.error as exc:
        raise TruncatedFile(f"{path}: {exc}") from None
    return word_bits
