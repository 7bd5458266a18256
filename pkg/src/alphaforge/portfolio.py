"""Combine several alpha position matrices into one portfolio.

Three schemes: equal weights, one learned scalar weight per alpha, and a
learned weight per (alpha, asset) cell.  Learned weights come from a model
whose input is the trailing window of each constituent's daily pnl, the
minimal signal distinguishing the alphas; weights are unconstrained reals
(an alpha can be shorted) and the combined row is L1-normalized afterward.

During combiner training the loss gradient flows through the unnormalized
linear combination; normalization is applied only when positions are
deployed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .alphas import PositionsMatrix, l1_normalize
from .data import ReturnsPanel
from .errors import (
    ConfigError,
    DimensionMismatch,
    DivergenceDetected,
    InsufficientData,
    WeightShapeMismatch,
)
from .losses import combine as combine_evals
from .losses import tvr_reg
from .models import (
    ModelKind,
    ModelParams,
    TrainConfig,
    _backward_cache,
    _forward_cache,
    _make_optimizer,
    init,
)


@dataclass
class AlphaStack:
    """L position matrices over identical dates and assets."""

    alphas: list
    names: list

    def __post_init__(self):
        if len(self.alphas) < 2:
            raise ValueError(f"a stack needs >= 2 alphas, got {len(self.alphas)}")
        if len(self.names) != len(self.alphas):
            raise ValueError("one name per alpha required")
        first = self.alphas[0]
        for a in self.alphas[1:]:
            if a.dates != first.dates or list(a.assets) != list(first.assets):
                raise DimensionMismatch("stack members must share dates and asset order")

    @property
    def L(self) -> int:
        return len(self.alphas)

    @property
    def dates(self):
        return self.alphas[0].dates

    @property
    def assets(self):
        return self.alphas[0].assets

    def tensor(self) -> np.ndarray:
        """(L, n_dates, n_assets) stack of position values."""
        return np.stack([a.values for a in self.alphas])

    def save(self, directory):
        """Write one positions CSV per alpha plus a manifest JSON."""
        os.makedirs(directory, exist_ok=True)
        entries = []
        for name, alpha in zip(self.names, self.alphas):
            fname = f"{name}.csv"
            with open(os.path.join(directory, fname), "w") as fh:
                fh.write(alpha.to_csv())
            entries.append({"name": name, "file": fname})
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump({"alphas": entries}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "AlphaStack":
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        names, alphas = [], []
        for entry in manifest["alphas"]:
            with open(os.path.join(directory, entry["file"])) as fh:
                alphas.append(PositionsMatrix.from_csv(fh.read()))
            names.append(entry["name"])
        return cls(alphas, names)


class WeightKind(Enum):
    EQUAL = "equal"
    SINGLE = "single"
    POINTWISE = "pointwise"

    @classmethod
    def from_label(cls, label: str) -> "WeightKind":
        for k in cls:
            if k.value == label:
                return k
        raise ValueError(f"unknown weight scheme {label!r}")


@dataclass
class WeightScheme:
    """Combination scheme plus the weight model's shape for learned kinds."""

    kind: WeightKind = WeightKind.EQUAL
    lookback: int = 20
    model_kind: str = "linear"
    hidden_dim: int = 8

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = WeightKind.from_label(self.kind)
        if self.kind is not WeightKind.EQUAL and self.lookback < 2:
            raise ConfigError(f"lookback must be >= 2 for learned schemes, got {self.lookback}")


def combine_equal(stack: AlphaStack) -> PositionsMatrix:
    """Mean of the constituents per day, then L1-normalized.

    Rows that cancel to zero stay zero (they contribute zero pnl days)."""
    values = stack.tensor().mean(axis=0)
    return PositionsMatrix(list(stack.dates), list(stack.assets), l1_normalize(values))


def _weights_per_date(weights, n_dates, tail_shape, what):
    w = np.asarray(weights, dtype=float)
    if w.shape == tail_shape:
        w = np.broadcast_to(w, (n_dates,) + tail_shape)
    if w.shape != (n_dates,) + tail_shape:
        raise WeightShapeMismatch(
            f"{what}: expected {(n_dates,) + tail_shape} or {tail_shape}, got {w.shape}")
    return w


def combine_single(stack: AlphaStack, weights) -> PositionsMatrix:
    """alpha_port(d) = sum_l w_l(d) * alpha_l(d), L1-normalized per day.

    `weights` is (n_dates, L), or (L,) to use the same weights every day.
    """
    a = stack.tensor()  # (L, D, M)
    w = _weights_per_date(weights, a.shape[1], (stack.L,), "single weights")
    values = np.einsum("dl,lda->da", w, a)
    return PositionsMatrix(list(stack.dates), list(stack.assets), l1_normalize(values))


def combine_pointwise(stack: AlphaStack, weights) -> PositionsMatrix:
    """alpha_port(d)_a = sum_l W_{l,a}(d) * alpha_l(d)_a, L1-normalized per day.

    `weights` is (n_dates, L, M), or (L, M) for date-constant weights.
    """
    a = stack.tensor()
    m = a.shape[2]
    w = _weights_per_date(weights, a.shape[1], (stack.L, m), "pointwise weights")
    values = np.einsum("dla,lda->da", w, a)
    return PositionsMatrix(list(stack.dates), list(stack.assets), l1_normalize(values))


def constituent_pnl(stack: AlphaStack, panel: ReturnsPanel, lag: int = 1,
                    normalize: bool = True) -> np.ndarray:
    """(L, n_panel_dates) matrix of each constituent's backtested daily pnl."""
    from .backtest import run_backtest

    rows = []
    for alpha in stack.alphas:
        sim = run_backtest(alpha, panel, lag=lag, normalize=normalize)
        rows.append(sim.pnl.values)
    return np.stack(rows)


def build_combiner_dataset(stack: AlphaStack, panel: ReturnsPanel, lookback: int):
    """Inputs and alignment data for the weight model.

    Returns (dates, x, alpha_rows, next_returns) where row i describes stack
    date dates[i]: x[i] is the day-major concatenation of the L constituent
    pnl values over the `lookback` panel days strictly before dates[i] (shape
    L*lookback); alpha_rows[i] is (L, M); next_returns[i] is the panel return
    row of the following panel date, or NaN for the final date (usable for
    prediction only).
    """
    panel_index = {d: i for i, d in enumerate(panel.dates)}
    pnl = constituent_pnl(stack, panel)  # (L, P)
    dates, xs, alpha_rows, targets = [], [], [], []
    a = stack.tensor()
    for i, d in enumerate(stack.dates):
        j = panel_index.get(d)
        if j is None or j < lookback:
            continue
        window = pnl[:, j - lookback : j]           # (L, lookback)
        xs.append(window.T.ravel())                 # day-major: L values per day
        alpha_rows.append(a[:, i, :])
        dates.append(d)
        if j + 1 < len(panel.dates):
            targets.append(panel.values[j + 1])
        else:
            targets.append(np.full(len(panel.assets), np.nan))
    if not dates:
        raise InsufficientData(
            f"no stack date has {lookback} days of pnl history in the panel")
    return dates, np.array(xs), np.stack(alpha_rows), np.array(targets)


def _weight_model_dims(scheme: WeightScheme, L: int, m: int):
    out = L if scheme.kind is WeightKind.SINGLE else L * m
    kind = ModelKind.from_label(scheme.model_kind)
    if kind is ModelKind.LINEAR:
        return kind, (L * scheme.lookback, out)
    if kind is ModelKind.MLP:
        return kind, (L * scheme.lookback, scheme.hidden_dim, out)
    # LSTM: one step per lookback day, L pnl values per step
    return kind, (L, scheme.hidden_dim, out)


def train_combiner(stack: AlphaStack, panel: ReturnsPanel, scheme: WeightScheme,
                   config: TrainConfig, seed: int = 0):
    """Fit the weight model by gradient descent through the combination.

    The model maps each day's pnl-history window to combination weights; the
    loss sees the unnormalized combined positions against next-day returns,
    and its gradient flows linearly back through the combination into the
    weights.  Returns (ModelParams, per-epoch loss trace).
    """
    if scheme.kind is WeightKind.EQUAL:
        raise ConfigError("equal weighting has nothing to train")
    dates, x, alpha_rows, targets = build_combiner_dataset(stack, panel, scheme.lookback)
    usable = ~np.isnan(targets[:, 0])
    x, alpha_rows, targets = x[usable], alpha_rows[usable], targets[usable]
    if x.shape[0] < 2:
        raise InsufficientData("combiner training needs >= 2 usable days")

    L, m = stack.L, len(stack.assets)
    kind, dims = _weight_model_dims(scheme, L, m)
    params = init(kind, dims, seed)
    w = params.weights
    opt = _make_optimizer(config, w.size)

    spans = [(s, min(s + config.batch_window, x.shape[0]))
             for s in range(0, x.shape[0], config.batch_window)]
    if len(spans) > 1 and spans[-1][1] - spans[-1][0] < 2:
        spans[-2] = (spans[-2][0], spans[-1][1])
        spans.pop()

    single = scheme.kind is WeightKind.SINGLE
    trace = []
    for epoch in range(config.epochs):
        total = 0.0
        for s, e in spans:
            out, cache = _forward_cache(params, x[s:e])
            if not np.all(np.isfinite(out)):
                raise DivergenceDetected(f"non-finite weights output at epoch {epoch}")
            ab = alpha_rows[s:e]  # (B, L, M)
            if single:
                wts = out  # (B, L)
                combined = np.einsum("bl,blm->bm", wts, ab)
            else:
                wts = out.reshape(out.shape[0], L, m)
                combined = np.einsum("blm,blm->bm", wts, ab)
            ev = config.loss.evaluate(combined.ravel(), targets[s:e].ravel())
            if config.tvr is not None:
                ev = combine_evals(ev, tvr_reg(combined, config.tvr))
            gpos = ev.grad.reshape(combined.shape)  # (B, M)
            if single:
                gout = np.einsum("bm,blm->bl", gpos, ab)
            else:
                gout = (gpos[:, None, :] * ab).reshape(out.shape)
            grad_w = _backward_cache(params, cache, gout)
            opt.step(w, grad_w)
            if not np.all(np.isfinite(w)):
                raise DivergenceDetected(f"non-finite combiner weights at epoch {epoch}")
            total += ev.value
        trace.append(total / len(spans))
    return params, trace


def combiner_positions(stack: AlphaStack, panel: ReturnsPanel, scheme: WeightScheme,
                       params: ModelParams) -> PositionsMatrix:
    """Combined portfolio positions from a trained weight model."""
    dates, x, alpha_rows, _ = build_combiner_dataset(stack, panel, scheme.lookback)
    out, _ = _forward_cache(params, x)
    L, m = stack.L, len(stack.assets)
    if scheme.kind is WeightKind.SINGLE:
        values = np.einsum("bl,blm->bm", out, alpha_rows)
    else:
        values = np.einsum("blm,blm->bm", out.reshape(out.shape[0], L, m), alpha_rows)
    return PositionsMatrix(dates, list(stack.assets), l1_normalize(values))
