"""A small dense ReLU network with softmax cross-entropy, trained by VDM-equipped SGDM.

Weights live in one flat vector. Each dense layer is stored as a row-major
``fan_out x (fan_in + 1)`` block whose last column is the bias, so every
output unit (its incoming weights plus its bias) is a contiguous slice. These
slices are the filter-normalization groups.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import io
from .analysis import ScanCurve, direction_scan
from .errors import DomainError, Diverged, NonFinite, ShapeMismatch
from .optim import Method, OptimizerConfig, OptimizerState, scheduled_lr, step
from .rng import SplitMix64, derive_seed
from .vdm import DeformationSpec, Identity

WEIGHTS_MAGIC = b"VDMW"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class Layer:
    offset: int
    fan_in: int
    fan_out: int

    @property
    def size(self):
        return self.fan_out * (self.fan_in + 1)


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    init: str = "uniform"  # or "zeros"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ValueError("need input, at least one hidden layer, and output widths")
        if any(w <= 0 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")
        if self.init not in ("uniform", "zeros"):
            raise ValueError(f"unknown init {self.init!r}")

    @property
    def layers(self):
        out, offset = [], 0
        for fan_in, fan_out in zip(self.widths, self.widths[1:]):
            out.append(Layer(offset, fan_in, fan_out))
            offset += out[-1].size
        return out

    @property
    def n_params(self):
        return sum(layer.size for layer in self.layers)

    @property
    def n_classes(self):
        return self.widths[-1]


def init_weights(spec: MlpSpec, seed: int) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer; biases start at zero."""
    w = np.zeros(spec.n_params)
    if spec.init == "zeros":
        return w
    rng = SplitMix64(seed)
    for layer in spec.layers:
        s = math.sqrt(6.0 / (layer.fan_in + layer.fan_out))
        block = np.zeros((layer.fan_out, layer.fan_in + 1))
        block[:, :-1] = rng.uniforms(layer.fan_out * layer.fan_in, -s, s).reshape(layer.fan_out, layer.fan_in)
        w[layer.offset : layer.offset + layer.size] = block.ravel()
    return w


def _blocks(spec, weights):
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (spec.n_params,):
        raise ShapeMismatch(f"expected {spec.n_params} weights, got shape {weights.shape}")
    return [
        weights[l.offset : l.offset + l.size].reshape(l.fan_out, l.fan_in + 1) for l in spec.layers
    ]


def _check_batch(spec, X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != spec.widths[0] or len(X) == 0:
        raise ShapeMismatch(f"batch must be nonempty with {spec.widths[0]} features, got {X.shape}")
    if y.shape != (len(X),):
        raise ShapeMismatch("labels must be one per sample")
    if y.min() < 0 or y.max() >= spec.n_classes:
        raise ShapeMismatch(f"labels must lie in [0, {spec.n_classes})")
    return X, y


def _forward(blocks, X):
    acts, pre = [X], []
    h = X
    for i, A in enumerate(blocks):
        z = h @ A[:, :-1].T + A[:, -1]
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(blocks) - 1 else z
        acts.append(h)
    return pre, acts


def _log_softmax(z):
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(spec: MlpSpec, weights, X, y):
    """Mean softmax cross-entropy over the batch and the class probabilities."""
    X, y = _check_batch(spec, X, y)
    _, acts = _forward(_blocks(spec, weights), X)
    logp = _log_softmax(acts[-1])
    per_sample = -logp[np.arange(len(y)), y]
    # mean taken as offsets from one sample: exact when all losses agree (uniform predictions)
    loss = float(per_sample[0] + np.mean(per_sample - per_sample[0]))
    return loss, np.exp(logp)


def backward(spec: MlpSpec, weights, X, y) -> np.ndarray:
    """Exact gradient of the mean batch loss, in the flat weight layout."""
    X, y = _check_batch(spec, X, y)
    blocks = _blocks(spec, weights)
    pre, acts = _forward(blocks, X)
    probs = np.exp(_log_softmax(acts[-1]))
    dz = probs
    dz[np.arange(len(y)), y] -= 1.0
    dz /= len(y)
    grad = np.empty(spec.n_params)
    for i in range(len(blocks) - 1, -1, -1):
        layer = spec.layers[i]
        h = acts[i]
        g = np.empty((layer.fan_out, layer.fan_in + 1))
        g[:, :-1] = dz.T @ h
        g[:, -1] = dz.sum(axis=0)
        grad[layer.offset : layer.offset + layer.size] = g.ravel()
        if i > 0:
            dz = (dz @ blocks[i][:, :-1]) * (pre[i - 1] > 0)
    return grad


def accuracy(spec, weights, X, y):
    _, probs = forward_loss(spec, weights, X, y)
    return float(np.mean(np.argmax(probs, axis=1) == y))


class MlpObjective:
    """Loss evaluator over a fixed set of samples (a batch or the full training set)."""

    def __init__(self, spec: MlpSpec, X, y):
        self.spec = spec
        self.X, self.y = _check_batch(spec, X, y)

    def loss(self, w):
        return forward_loss(self.spec, w, self.X, self.y)[0]

    def loss_and_grad(self, w):
        return self.loss(w), backward(self.spec, w, self.X, self.y)

    def filter_groups(self):
        """One group per output unit: its incoming weights and its bias."""
        for layer in self.spec.layers:
            for j in range(layer.fan_out):
                start = layer.offset + j * (layer.fan_in + 1)
                yield slice(start, start + layer.fan_in + 1)


@dataclass(frozen=True)
class SyntheticDataset:
    generator: str
    n_train: int
    n_test: int
    noise: float
    seed: int
    X_train: np.ndarray = field(repr=False)
    y_train: np.ndarray = field(repr=False)
    X_test: np.ndarray = field(repr=False)
    y_test: np.ndarray = field(repr=False)


def _two_gaussians(rng, n, noise):
    y = np.arange(n) % 2
    centers = np.where(y[:, None] == 0, [-1.0, 0.0], [1.0, 0.0])
    return centers + noise * rng.normals(2 * n).reshape(n, 2), y


def _two_spirals(rng, n, noise):
    y = np.arange(n) % 2
    t = np.sqrt(rng.uniforms(n)) * 3 * math.pi
    r = t / (3 * math.pi) * 2.0
    pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    pts = np.where(y[:, None] == 0, pts, -pts)
    return pts + noise * rng.normals(2 * n).reshape(n, 2), y


GENERATORS = {"two-gaussians": _two_gaussians, "two-spirals": _two_spirals}


def make_dataset(generator="two-gaussians", n_train=512, n_test=512, noise=0.3, seed=0) -> SyntheticDataset:
    """Train and test sets come from independent streams derived from ``seed``.

    Labels alternate 0, 1, 0, ... so classes are balanced within one sample.
    """
    try:
        gen = GENERATORS[generator]
    except KeyError:
        raise ValueError(f"unknown generator {generator!r}; choose from {sorted(GENERATORS)}") from None
    X_train, y_train = gen(SplitMix64(derive_seed(seed, 0)), n_train, noise)
    X_test, y_test = gen(SplitMix64(derive_seed(seed, 1)), n_test, noise)
    return SyntheticDataset(generator, n_train, n_test, noise, seed, X_train, y_train, X_test, y_test)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 60
    lr: float = 0.1
    momentum: float = 0.9
    method: Method = Method.NESTEROV
    milestones: tuple = ()  # in epochs
    gamma: float = 0.1
    vdm: DeformationSpec = field(default_factory=Identity)
    seed: int = 0

    @property
    def optimizer(self):
        return OptimizerConfig(self.method, self.lr, self.momentum, self.milestones, self.gamma, self.epochs)

    def to_dict(self):
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "vdm": self.vdm.to_string(),
            **{k: v for k, v in self.optimizer.to_dict().items() if k != "max_steps"},
        }


TRAIN_LOG_HEADER = ["epoch", "batch_loss_mean", "deformed_loss_mean", "ddelta_mean", "train_acc", "test_acc", "lr"]


@dataclass
class TrainResult:
    weights: np.ndarray
    log: list
    status: str = "completed"
    message: str = ""

    def log_to_csv(self, path):
        io.write_csv(path, TRAIN_LOG_HEADER, ([row[k] for k in TRAIN_LOG_HEADER] for row in self.log))


def _batches(n, batch_size, order):
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train(spec: MlpSpec, dataset: SyntheticDataset, config: TrainConfig) -> TrainResult:
    """Minibatch training with ``g = delta'(l_batch) grad l_batch``.

    Epoch 0 of the log is an evaluation pass over the initial weights. Each
    later row averages the batch losses seen during that epoch (for Nesterov,
    at the look-ahead points where gradients were taken).
    """
    if config.batch_size > dataset.n_train or config.batch_size < 1:
        raise ValueError("batch size must lie in [1, n_train]")
    opt = config.optimizer
    vdm = config.vdm
    w = init_weights(spec, derive_seed(config.seed, 0))
    shuffler = SplitMix64(derive_seed(config.seed, 1))
    X, y = dataset.X_train, dataset.y_train
    state = OptimizerState.initial(w, opt)
    result = TrainResult(w, [])

    def log_row(epoch, losses, deformed, ddeltas, lr):
        result.log.append({
            "epoch": epoch,
            "batch_loss_mean": float(np.mean(losses)),
            "deformed_loss_mean": float(np.mean(deformed)),
            "ddelta_mean": float(np.mean(ddeltas)),
            "train_acc": accuracy(spec, state.p, X, y),
            "test_acc": accuracy(spec, state.p, dataset.X_test, dataset.y_test),
            "lr": lr,
        })

    try:
        losses = [forward_loss(spec, state.p, X[b], y[b])[0] for b in _batches(len(X), config.batch_size, np.arange(len(X)))]
        log_row(0, losses, [vdm.value(l) for l in losses], [vdm.derivative(l) for l in losses], scheduled_lr(opt, 0))
        for epoch in range(1, config.epochs + 1):
            lr = scheduled_lr(opt, epoch - 1)
            order = shuffler.shuffle_indices(len(X))
            losses, deformed, ddeltas = [], [], []
            for b in _batches(len(X), config.batch_size, order):
                state, ev = step(state, opt, MlpObjective(spec, X[b], y[b]), vdm, schedule_k=epoch - 1)
                losses.append(ev.loss)
                deformed.append(ev.deformed_loss)
                ddeltas.append(ev.ddelta)
            log_row(epoch, losses, deformed, ddeltas, lr)
    except DomainError as exc:
        result.status, result.message = "domain_error", str(exc)
    except (Diverged, NonFinite) as exc:
        result.status, result.message = "diverged", str(exc)
    result.weights = state.p
    return result


def scan_trained(weights, spec: MlpSpec, dataset: SyntheticDataset, seed=0, alpha_max=1.0, n_points=51) -> ScanCurve:
    """Filter-normalized 1D scan of the full training loss around trained weights."""
    return direction_scan(MlpObjective(spec, dataset.X_train, dataset.y_train), weights, seed, "filter", alpha_max, n_points)


def save_weights(path, spec: MlpSpec, weights):
    """Little-endian file: magic, version, width count, widths (uint32), then float64 weights."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (spec.n_params,):
        raise ShapeMismatch("weights do not match the spec")
    header = WEIGHTS_MAGIC + struct.pack(f"<II{len(spec.widths)}I", WEIGHTS_VERSION, len(spec.widths), *spec.widths)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(weights.astype("<f8").tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise ValueError(f"{path} is not a weights file")
    version, n = struct.unpack_from("<II", data, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights version {version}")
    widths = struct.unpack_from(f"<{n}I", data, 12)
    spec = MlpSpec(widths)
    weights = np.frombuffer(data, dtype="<f8", offset=12 + 4 * n).astype(float)
    if weights.shape != (spec.n_params,):
        raise ValueError("weights file is truncated")
    return spec, weights
