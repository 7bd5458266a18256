"""Trainable position generators: linear, MLP, and LSTM with a linear head.

All three models share one contract: a flat float64 weight vector with a
deterministic layout, a forward pass mapping feature rows to position rows,
and an exact reverse-mode gradient of loss(forward(x)) given d(loss)/d(positions)
from the losses module.  Gradients are hand-written per architecture; there
is no autodiff dependency.

Training is plain full-precision gradient descent (SGD or Adam) over
chronological batches of consecutive days, so results are bit-reproducible
from (seed, config, data).
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import os
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    DimensionMismatch,
    DivergenceDetected,
    MissingWindow,
)
from .losses import LossSpec, TvrRegSpec, combine, tvr_reg

CHECKPOINT_MAGIC = b"AFMD"
CHECKPOINT_VERSION = 1


class ModelKind(Enum):
    LINEAR = 0
    MLP = 1
    LSTM = 2

    @classmethod
    def from_label(cls, label: str) -> "ModelKind":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown model kind {label!r}") from None


def _layout(kind: ModelKind, dims):
    """Ordered (shape, init_scale) pairs for the flat weight vector.

    Init scale is 1/sqrt(fan_in) of the matrix the block belongs to; biases
    share their matrix's scale.
    """
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ValueError(f"dims must be positive, got {dims}")
    if kind is ModelKind.LINEAR:
        if len(dims) != 2:
            raise ValueError(f"linear model needs dims (in, out), got {dims}")
        d_in, d_out = dims
        s = 1.0 / np.sqrt(d_in)
        return [((d_out, d_in), s), ((d_out,), s)]
    if kind is ModelKind.MLP:
        if len(dims) < 2:
            raise ValueError(f"mlp needs at least (in, out) dims, got {dims}")
        out = []
        for a, b in zip(dims[:-1], dims[1:]):
            s = 1.0 / np.sqrt(a)
            out.append(((b, a), s))
            out.append(((b,), s))
        return out
    if len(dims) != 3:
        raise ValueError(f"lstm needs dims (input_dim, hidden, out), got {dims}")
    d, h, o = dims
    si, sh = 1.0 / np.sqrt(d), 1.0 / np.sqrt(h)
    return [
        ((4 * h, d), si),   # input-to-hidden
        ((4 * h, h), sh),   # hidden-to-hidden
        ((4 * h,), sh),     # gate bias
        ((o, h), sh),       # head weight
        ((o,), sh),         # head bias
    ]


def n_weights(kind: ModelKind, dims) -> int:
    return int(sum(np.prod(shape) for shape, _ in _layout(kind, dims)))


@dataclass
class ModelParams:
    """Model architecture plus its flat weight vector."""

    kind: ModelKind
    dims: tuple
    weights: np.ndarray
    seed: int

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = ModelKind.from_label(self.kind)
        self.dims = tuple(int(d) for d in self.dims)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        expected = n_weights(self.kind, self.dims)
        if self.weights.shape != (expected,):
            raise ValueError(
                f"{self.kind.name} dims {self.dims} imply {expected} weights, "
                f"got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite weights")

    def unpack(self):
        """Views into the flat vector, in layout order."""
        out, k = [], 0
        for shape, _ in _layout(self.kind, self.dims):
            size = int(np.prod(shape))
            out.append(self.weights[k : k + size].reshape(shape))
            k += size
        return out

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    @property
    def layer_dims(self) -> tuple:
        return self.dims

    @property
    def hidden_dim(self) -> int:
        if self.kind is not ModelKind.LSTM:
            raise AttributeError("hidden_dim is defined for LSTM models only")
        return self.dims[1]


def init(kind, dims, seed: int) -> ModelParams:
    """Deterministic uniform [-s, s] initialization, s = 1/sqrt(fan_in)."""
    if isinstance(kind, str):
        kind = ModelKind.from_label(kind)
    rng = np.random.default_rng(seed)
    blocks = [rng.uniform(-s, s, size=int(np.prod(shape)))
              for shape, s in _layout(kind, dims)]
    return ModelParams(kind, tuple(dims), np.concatenate(blocks), int(seed))


def _pack(blocks) -> np.ndarray:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in blocks])


def _forward_cache(params: ModelParams, x: np.ndarray):
    k = params.kind
    if k is ModelKind.LINEAR:
        w, b = params.unpack()
        if x.shape[1] != w.shape[1]:
            raise DimensionMismatch(f"input width {x.shape[1]}, model expects {w.shape[1]}")
        return x @ w.T + b, x
    if k is ModelKind.MLP:
        blocks = params.unpack()
        if x.shape[1] != blocks[0].shape[1]:
            raise DimensionMismatch(f"input width {x.shape[1]}, model expects {blocks[0].shape[1]}")
        acts = [x]
        n_layers = len(blocks) // 2
        h = x
        for i in range(n_layers):
            w, b = blocks[2 * i], blocks[2 * i + 1]
            z = h @ w.T + b
            if i < n_layers - 1:
                h = np.tanh(z)
                acts.append(h)
            else:
                h = z
        return h, acts
    w_ih, w_hh, b, w_head, b_head = params.unpack()
    d = params.dims[0]
    if x.shape[1] % d != 0:
        raise DimensionMismatch(
            f"input width {x.shape[1]} is not a multiple of step dim {d}")
    x3 = np.ascontiguousarray(x, dtype=np.float64).reshape(x.shape[0], x.shape[1] // d, d)
    h_t, kcache = kernels.lstm_forward(x3, w_ih, w_hh, b)
    return h_t @ w_head.T + b_head, (x3, h_t, kcache)


def _backward_cache(params: ModelParams, cache, grad_out: np.ndarray) -> np.ndarray:
    k = params.kind
    if k is ModelKind.LINEAR:
        x = cache
        return _pack([grad_out.T @ x, grad_out.sum(axis=0)])
    if k is ModelKind.MLP:
        acts = cache
        blocks = params.unpack()
        n_layers = len(blocks) // 2
        grads = [None] * len(blocks)
        d = grad_out
        for i in range(n_layers - 1, -1, -1):
            w = blocks[2 * i]
            grads[2 * i] = d.T @ acts[i]
            grads[2 * i + 1] = d.sum(axis=0)
            if i > 0:
                a = acts[i]  # tanh output of layer i-1
                d = (d @ w) * (1.0 - a * a)
        return _pack(grads)
    x3, h_t, kcache = cache
    w_ih, w_hh, b, w_head, _ = params.unpack()
    d_head_w = grad_out.T @ h_t
    d_head_b = grad_out.sum(axis=0)
    dh_last = grad_out @ w_head
    dw_ih, dw_hh, db = kernels.lstm_backward(x3, w_ih, w_hh, b, kcache, dh_last)
    return _pack([dw_ih, dw_hh, db, d_head_w, d_head_b])


def forward(params: ModelParams, inputs) -> np.ndarray:
    """Positions for one or many feature rows.

    Linear: W x + b.  MLP: tanh hidden layers, linear output.  LSTM: the
    feature row is consumed as a sequence of scalar steps (or dims[0]-wide
    steps); the final hidden state goes through a linear head.
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    out, _ = _forward_cache(params, np.atleast_2d(x))
    return out[0] if single else out


def backward(params: ModelParams, inputs, grad_positions) -> np.ndarray:
    """Gradient of the loss over the flat weight vector.

    `grad_positions` is d(loss)/d(positions) evaluated at forward(inputs),
    shaped like the forward output.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    g = np.atleast_2d(np.asarray(grad_positions, dtype=np.float64))
    out, cache = _forward_cache(params, x)
    if g.shape != out.shape:
        raise DimensionMismatch(f"grad shape {g.shape} does not match output {out.shape}")
    return _backward_cache(params, cache, g)


@dataclass
class ForecastBatch:
    """Inputs and the positions a model produced for them."""

    inputs: np.ndarray
    positions_out: np.ndarray


def forecast(params: ModelParams, inputs) -> ForecastBatch:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    return ForecastBatch(x, forward(params, x))


class _Sgd:
    def __init__(self, lr, size):
        self.lr = lr

    def step(self, w, g):
        w -= self.lr * g


class _Adam:
    def __init__(self, lr, size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, w, g):
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * g
        self.v = self.b2 * self.v + (1.0 - self.b2) * g * g
        m_hat = self.m / (1.0 - self.b1 ** self.t)
        v_hat = self.v / (1.0 - self.b2 ** self.t)
        w -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    """Hyperparameters for gradient-descent training."""

    loss: LossSpec = field(default_factory=LossSpec)
    learning_rate: float = 0.01
    epochs: int = 10
    batch_window: int = 32
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    tvr: TvrRegSpec | None = None
    mode: str = "singular"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_window < 2:
            raise ConfigError(f"batch_window must be >= 2, got {self.batch_window}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.mode not in ("singular", "ensemble"):
            raise ConfigError(f"mode must be singular or ensemble, got {self.mode!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss"]["kind"] = self.loss.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossSpec(**d["loss"])
        if isinstance(d.get("tvr"), dict):
            d["tvr"] = TvrRegSpec(**d["tvr"])
        return cls(**d)


def _batches(n: int, window: int):
    """Chronological chunks of `window` rows; a short tail merges backward
    so every batch has >= 2 rows."""
    starts = list(range(0, n, window))
    spans = [(s, min(s + window, n)) for s in starts]
    if len(spans) > 1 and spans[-1][1] - spans[-1][0] < 2:
        spans[-2] = (spans[-2][0], spans[-1][1])
        spans.pop()
    return spans


def _make_optimizer(config: TrainConfig, size: int):
    if config.optimizer == "sgd":
        return _Sgd(config.learning_rate, size)
    return _Adam(config.learning_rate, size,
                 config.adam_beta1, config.adam_beta2, config.adam_eps)


def train(params: ModelParams, features, targets, config: TrainConfig):
    """Gradient descent of config.loss (plus optional turnover penalty).

    `features` rows must already be in chronological order; each batch is a
    window of consecutive days and loss statistics are computed within it.
    Returns (trained ModelParams, per-epoch mean loss trace).  The input
    params are not modified.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} feature rows vs {y.shape[0]} target rows")
    if x.shape[0] < 2:
        raise ConfigError("training needs at least 2 rows")
    if y.shape[1] != params.out_dim:
        raise DimensionMismatch(
            f"target width {y.shape[1]} does not match model output {params.out_dim}")

    work = ModelParams(params.kind, params.dims, params.weights.copy(), params.seed)
    w = work.weights
    opt = _make_optimizer(config, w.size)
    spans = _batches(x.shape[0], config.batch_window)

    trace = []
    for epoch in range(config.epochs):
        total = 0.0
        for s, e in spans:
            out, cache = _forward_cache(work, x[s:e])
            if not np.all(np.isfinite(out)):
                raise DivergenceDetected(f"non-finite positions at epoch {epoch}")
            ev = config.loss.evaluate(out.ravel(), y[s:e].ravel())
            if config.tvr is not None:
                ev = combine(ev, tvr_reg(out, config.tvr))
            grad_w = _backward_cache(work, cache, ev.grad.reshape(out.shape))
            opt.step(w, grad_w)
            if not np.all(np.isfinite(w)):
                raise DivergenceDetected(f"non-finite weights at epoch {epoch}")
            total += ev.value
        trace.append(total / len(spans))
    return work, trace


def predict_positions(params, dataset, mode: str = "singular"):
    """Positions matrix from panel-aligned feature windows.

    Row dates are the decision dates: a window labeled with as-of date t only
    sees data through t-1, so its output is the position held at the close of
    t-1 and the standard one-day backtest lag pairs it with the return at t,
    exactly as training paired them.

    Singular mode: one model maps the pooled (asset-mean) window to the full
    asset vector.  Ensemble mode: `params` is a sequence of per-asset models,
    each emitting one scalar.
    """
    from .alphas import PositionsMatrix

    if len(dataset.dates) == 0:
        raise MissingWindow("dataset contains no complete windows")
    dates = [d - datetime.timedelta(days=1) for d in dataset.dates]
    m = len(dataset.assets)
    if mode == "singular":
        if params.out_dim != m:
            raise DimensionMismatch(
                f"model emits {params.out_dim} positions, universe has {m} assets")
        values = forward(params, dataset.pooled())
    elif mode == "ensemble":
        models = list(params)
        if len(models) != m:
            raise DimensionMismatch(f"{len(models)} models for {m} assets")
        cols = []
        for a, p in enumerate(models):
            if p.out_dim != 1:
                raise DimensionMismatch("ensemble members must emit one position each")
            cols.append(forward(p, dataset.features[:, a, :])[:, 0])
        values = np.column_stack(cols)
    else:
        raise ConfigError(f"mode must be singular or ensemble, got {mode!r}")
    return PositionsMatrix(dates, list(dataset.assets), values)


def save_checkpoint(params: ModelParams, path, train_config: TrainConfig | None = None):
    """Flat binary container: magic, version, kind, dims, seed, f64 weights.

    All integers little-endian.  The TrainConfig, when given, lands in a JSON
    sidecar next to the binary.
    """
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<B", params.kind.value))
        fh.write(struct.pack("<H", len(params.dims)))
        fh.write(struct.pack(f"<{len(params.dims)}I", *params.dims))
        fh.write(struct.pack("<q", params.seed))
        fh.write(struct.pack("<Q", params.weights.size))
        fh.write(params.weights.astype("<f8").tobytes())
    if train_config is not None:
        with open(path + ".json", "w") as fh:
            json.dump(train_config.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (ModelParams, config dict or None)."""
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (code,) = struct.unpack_from("<B", blob, 6)
    (ndims,) = struct.unpack_from("<H", blob, 7)
    off = 9
    dims = struct.unpack_from(f"<{ndims}I", blob, off)
    off += 4 * ndims
    (seed,) = struct.unpack_from("<q", blob, off)
    off += 8
    (count,) = struct.unpack_from("<Q", blob, off)
    off += 8
    weights = np.frombuffer(blob, dtype="<f8", count=count, offset=off).copy()
    if off + 8 * count != len(blob):
        raise ValueError(f"{path}: trailing or missing bytes in checkpoint")
    params = ModelParams(ModelKind(code), dims, weights, int(seed))
    sidecar = path + ".json"
    config = None
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            config = json.load(fh)
    return params, config
