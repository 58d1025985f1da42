"""From-scratch feed-forward classifier with manual backpropagation.

The stack is input -> [dense(width) -> batch norm -> hard shrinkage ->
dropout] x depth -> dense(n_classes) -> softmax, trained with cross-entropy
and Adam plus a reduce-on-plateau learning-rate schedule. All gradients are
hand-derived adjoints; no autodiff. Checkpoints round-trip bit-exactly
through a little-endian binary format (magic "TAPN").
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, ShapeMismatchError

CHECKPOINT_MAGIC = b"TAPN"
CHECKPOINT_VERSION = 1

_TAG_DENSE = 1
_TAG_BATCHNORM = 2
_TAG_SHRINKAGE = 3
_TAG_DROPOUT = 4
_TAG_SOFTMAX = 5


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class DenseLayer:
    """Affine map out = x W^T + b with exact linear-algebra adjoints."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        bias = np.asarray(bias, dtype=np.float64)
        if weights.shape[0] != bias.shape[0]:
            raise ShapeMismatchError(
                f"bias length {bias.shape[0]} != weight rows {weights.shape[0]}"
            )
        self.weights = weights
        self.bias = bias
        self._x = None
        self.weights_grad = np.zeros_like(weights)
        self.bias_grad = np.zeros_like(bias)

    @classmethod
    def initialized(
        cls, fan_in: int, fan_out: int, rng: np.random.Generator, scale: float = 1.0
    ) -> "DenseLayer":
        # uniform with variance 2/fan_in, suited to the shrinkage/rectifier family
        bound = scale * np.sqrt(6.0 / fan_in)
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        return cls(weights, np.zeros(fan_out))

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        if x.shape[1] != self.weights.shape[1]:
            raise ShapeMismatchError(
                f"input width {x.shape[1]} != layer fan-in {self.weights.shape[1]}"
            )
        self._x = x
        return x @ self.weights.T + self.bias

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        self.weights_grad = upstream.T @ self._x
        self.bias_grad = upstream.sum(axis=0)
        return upstream @ self.weights

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.weights_grad, self.bias_grad]


class BatchNormLayer:
    """Per-feature batch normalization with running statistics.

    Training normalizes by the batch mean and biased variance, then applies
    the gamma/beta scale-shift and folds the batch statistics into the
    running ones: running <- (1 - momentum) * running + momentum * batch.
    Inference normalizes by the running statistics.
    """

    def __init__(self, width: int, epsilon: float = 1e-5, momentum: float = 0.1):
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.epsilon = float(epsilon)
        self.momentum = float(momentum)
        self.gamma_grad = np.zeros(width)
        self.beta_grad = np.zeros(width)
        self._cache = None

    @property
    def width(self) -> int:
        return self.gamma.shape[0]

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        if x.shape[1] != self.width:
            raise ShapeMismatchError(f"input width {x.shape[1]} != layer width {self.width}")
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch norm in train mode needs batch size >= 2")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            std = np.sqrt(var + self.epsilon)
            xhat = (x - mean) / std
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
            self._cache = (xhat, std, True)
        else:
            std = np.sqrt(self.running_var + self.epsilon)
            xhat = (x - self.running_mean) / std
            self._cache = (xhat, std, False)
        return self.gamma * xhat + self.beta

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        xhat, std, trained = self._cache
        self.gamma_grad = (upstream * xhat).sum(axis=0)
        self.beta_grad = upstream.sum(axis=0)
        dxhat = upstream * self.gamma
        if not trained:
            return dxhat / std
        # adjoint of normalization by batch mean / biased variance
        return (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) / std

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.gamma_grad, self.beta_grad]


class ShrinkageLayer:
    """Hard-shrinkage activation: keep u where |u| > alpha, zero elsewhere."""

    def __init__(self, alpha: float):
        if alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {alpha}")
        self.alpha = float(alpha)
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        self._mask = np.abs(x) > self.alpha
        return x * self._mask

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        # subgradient 0 on the dead band, including |u| == alpha
        return upstream * self._mask

    def params(self):
        return []

    def grads(self):
        return []


class DropoutLayer:
    """Inverted dropout: zero units with probability rate, rescale survivors."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self.last_mask = None

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        if not train or self.rate == 0.0:
            self.last_mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        self.last_mask = rng.random(x.shape) >= self.rate
        return x * self.last_mask / (1.0 - self.rate)

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        if self.last_mask is None:
            return upstream
        return upstream * self.last_mask / (1.0 - self.rate)

    def params(self):
        return []

    def grads(self):
        return []


# ---------------------------------------------------------------------------
# softmax head and loss
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, max-subtracted for stability at large logits."""
    logits = np.atleast_2d(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def cross_entropy(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy -sum_j g_j log p_j over the batch, clamped logs."""
    p = np.clip(np.atleast_2d(probabilities), 1e-300, 1.0)
    return float(-(np.atleast_2d(targets) * np.log(p)).sum(axis=1).mean())


def softmax_ce_backward(probabilities: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the per-sample cross-entropy w.r.t. the logits: p - g."""
    return np.atleast_2d(probabilities) - np.atleast_2d(targets)


# ---------------------------------------------------------------------------
# network container
# ---------------------------------------------------------------------------

class Network:
    """Sequential layer stack ending in a dense logit layer + softmax."""

    def __init__(self, layers: list, n_classes: int):
        self.layers = layers
        self.n_classes = int(n_classes)

    @property
    def input_dim(self) -> int:
        for layer in self.layers:
            if isinstance(layer, DenseLayer):
                return layer.weights.shape[1]
        raise ValueError("network has no dense layer")

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        """Return class probabilities for a batch (rows = samples)."""
        z = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            z = layer.forward(z, train=train, rng=rng)
        return softmax(z)

    def backward(self, logit_grad: np.ndarray) -> np.ndarray:
        grad = logit_grad
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, train=False).argmax(axis=1)


def build_network(
    input_dim: int,
    n_classes: int,
    width: int = 300,
    depth: int = 2,
    alpha: float = 0.1,
    dropout_rate: float = 0.2,
    seed=0,
) -> Network:
    """Assemble the classifier: depth x [dense -> bn -> shrink -> dropout]."""
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for _ in range(depth):
        layers.append(DenseLayer.initialized(fan_in, width, rng))
        layers.append(BatchNormLayer(width))
        layers.append(ShrinkageLayer(alpha))
        layers.append(DropoutLayer(dropout_rate))
        fan_in = width
    # small-scale logit layer keeps the untrained loss at chance level (log C)
    layers.append(DenseLayer.initialized(fan_in, n_classes, rng, scale=0.01))
    return Network(layers, n_classes)


# ---------------------------------------------------------------------------
# Adam optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment buffers and step counter for a parameter list."""

    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(state: AdamState, params, grads, lr: float):
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(state.first_moment) or len(params) != len(grads):
        raise ShapeMismatchError("params/grads do not match the Adam state")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params


# ---------------------------------------------------------------------------
# plateau learning-rate scheduler
# ---------------------------------------------------------------------------

@dataclass
class PlateauScheduler:
    """Cut the learning rate by `factor` after `patience` flat epochs.

    An epoch counts toward the plateau unless its metric beats the best seen
    so far by more than min_delta; the very first epoch has no history to
    beat, so it opens a plateau of length one. A metric trace that stays
    flat for exactly `patience` epochs therefore triggers one cut.
    """

    lr: float = 1e-3
    factor: float = 0.8
    patience: int = 18
    min_delta: float = 1e-4
    best_metric: float | None = None
    stall_count: int = 0

    def step(self, accuracy: float) -> float:
        """Record one epoch's accuracy; return the (possibly reduced) lr."""
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
        if self.best_metric is None:
            self.best_metric = accuracy
            self.stall_count = 1
        elif accuracy > self.best_metric + self.min_delta:
            self.best_metric = accuracy
            self.stall_count = 0
        else:
            self.stall_count += 1
        if self.stall_count >= self.patience:
            self.lr *= self.factor
            self.stall_count = 0
        return self.lr


# ---------------------------------------------------------------------------
# training / evaluation loops
# ---------------------------------------------------------------------------

def train_epoch(
    net: Network,
    features: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    seed,
    adam: AdamState,
    lr: float,
) -> tuple[float, float]:
    """One shuffled pass over the shard; Adam update after every batch.

    The last partial batch is kept. Returns the mean training loss and the
    training accuracy accumulated over the (dropout-active) batch passes.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    total_loss = 0.0
    correct = 0
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        xb = features[idx]
        gb = one_hot(labels[idx], net.n_classes)
        probs = net.forward(xb, train=True, rng=rng)
        total_loss += cross_entropy(probs, gb) * len(idx)
        correct += int((probs.argmax(axis=1) == labels[idx]).sum())
        net.backward(softmax_ce_backward(probs, gb) / len(idx))
        adam_step(adam, net.params(), net.grads(), lr)
    n = len(labels)
    return total_loss / n, correct / n


def evaluate(
    net: Network,
    features: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 512,
) -> tuple[float, float, np.ndarray]:
    """Inference-mode mean loss, accuracy and predicted classes."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    total_loss = 0.0
    preds = np.empty(len(labels), dtype=np.int64)
    for start in range(0, len(labels), batch_size):
        xb = features[start : start + batch_size]
        yb = labels[start : start + batch_size]
        probs = net.forward(xb, train=False)
        total_loss += cross_entropy(probs, one_hot(yb, net.n_classes)) * len(yb)
        preds[start : start + batch_size] = probs.argmax(axis=1)
    n = len(labels)
    return total_loss / n, float((preds == labels).mean()), preds


# ---------------------------------------------------------------------------
# checkpoint serialization (magic "TAPN", little-endian, 64-bit parameters)
# ---------------------------------------------------------------------------

def _write_array(out: bytearray, arr: np.ndarray):
    out += np.ascontiguousarray(arr, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FileFormatError("truncated checkpoint file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def checkpoint_bytes(net: Network) -> bytes:
    """Serialize the network into the TAPN binary layout."""
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", CHECKPOINT_VERSION)
    out += struct.pack("<I", len(net.layers) + 1)  # + softmax record
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            fan_out, fan_in = layer.weights.shape
            out += struct.pack("<III", _TAG_DENSE, fan_out, fan_in)
            _write_array(out, layer.weights)
            _write_array(out, layer.bias)
        elif isinstance(layer, BatchNormLayer):
            out += struct.pack("<II", _TAG_BATCHNORM, layer.width)
            out += struct.pack("<dd", layer.epsilon, layer.momentum)
            for arr in (layer.gamma, layer.beta, layer.running_mean, layer.running_var):
                _write_array(out, arr)
        elif isinstance(layer, ShrinkageLayer):
            out += struct.pack("<Id", _TAG_SHRINKAGE, layer.alpha)
        elif isinstance(layer, DropoutLayer):
            out += struct.pack("<Id", _TAG_DROPOUT, layer.rate)
        else:
            raise ValueError(f"cannot serialize layer type {type(layer).__name__}")
    out += struct.pack("<II", _TAG_SOFTMAX, net.n_classes)
    return bytes(out)


def save_checkpoint(net: Network, path):
    """Write the network to `path` in the TAPN binary layout."""
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(net))


def load_checkpoint(path) -> Network:
    """Read a TAPN checkpoint back into a Network; bit-exact round trip."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise FileFormatError("bad checkpoint magic")
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise FileFormatError(f"unsupported checkpoint version {version}")
    n_records = reader.u32()
    layers = []
    n_classes = None
    for _ in range(n_records):
        tag = reader.u32()
        if tag == _TAG_DENSE:
            fan_out = reader.u32()
            fan_in = reader.u32()
            weights = reader.f64_array(fan_out * fan_in).reshape(fan_out, fan_in)
            bias = reader.f64_array(fan_out)
            layers.append(DenseLayer(weights, bias))
        elif tag == _TAG_BATCHNORM:
            width = reader.u32()
            epsilon = reader.f64()
            momentum = reader.f64()
            layer = BatchNormLayer(width, epsilon=epsilon, momentum=momentum)
            layer.gamma = reader.f64_array(width)
            layer.beta = reader.f64_array(width)
            layer.running_mean = reader.f64_array(width)
            layer.running_var = reader.f64_array(width)
            layers.append(layer)
        elif tag == _TAG_SHRINKAGE:
            layers.append(ShrinkageLayer(reader.f64()))
        elif tag == _TAG_DROPOUT:
            layers.append(DropoutLayer(reader.f64()))
        elif tag == _TAG_SOFTMAX:
            n_classes = reader.u32()
        else:
            raise FileFormatError(f"unknown layer tag {tag}")
    if n_classes is None:
        raise FileFormatError("checkpoint has no softmax record")
    return Network(layers, n_classes)
