"""Differentiable training objectives over (positions, realized returns).

Every loss maps (alpha, r) to a scalar value plus the analytic gradient with
respect to alpha, packaged as a :class:`LossEval`.  All losses are minimized;
objectives that are naturally maximized (profit, Sharpe and friends) carry a
negative sign internally so the optimizer contract is uniform.

`pnl` below always means the element-wise product vector alpha * r.  A
training batch is one window of consecutive days flattened day-major, so the
batch pnl statistics (mean, std, drawdown path) are computed within the
window exactly like the evaluation metrics compute them on a backtest.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegenerateInput,
    InsufficientData,
    InsufficientRows,
    LengthMismatch,
)

EPS_LOG = 1e-12  # guards the logarithm in modsharpe_loss


@dataclass
class LossEval:
    """Scalar loss value and gradient with respect to the positions vector."""

    value: float
    grad: np.ndarray

    def __post_init__(self):
        self.grad = np.asarray(self.grad, dtype=float)
        if not np.isfinite(self.value) or not np.all(np.isfinite(self.grad)):
            raise ValueError("non-finite loss evaluation")


def combine(loss: LossEval, reg: LossEval) -> LossEval:
    """Element-wise sum of two evaluations (main loss plus regularizer)."""
    if loss.grad.shape != reg.grad.shape:
        raise LengthMismatch(
            f"cannot combine gradients of shape {loss.grad.shape} and {reg.grad.shape}")
    return LossEval(loss.value + reg.value, loss.grad + reg.grad)


def _check(alpha, r):
    a = np.asarray(alpha, dtype=float).ravel()
    v = np.asarray(r, dtype=float).ravel()
    if a.shape != v.shape:
        raise LengthMismatch(f"positions length {a.shape[0]} vs returns length {v.shape[0]}")
    if a.size < 2:
        raise InsufficientData(f"losses need >= 2 observations, got {a.size}")
    return a, v


def mse_loss(alpha, r) -> LossEval:
    """value = mean((alpha - r)^2); grad = 2 (alpha - r) / n."""
    a, v = _check(alpha, r)
    d = a - v
    return LossEval(float(np.mean(d * d)), 2.0 * d / a.size)


def pnl_loss(alpha, r) -> LossEval:
    """value = -mean(alpha * r); grad = -r / n."""
    a, v = _check(alpha, r)
    return LossEval(float(-np.mean(a * v)), -v / a.size)


def _std_partials(pnl, r):
    """d std_pop(pnl) / d alpha_i = (pnl_i - mean) * r_i / (n * std); 0 if std == 0."""
    n = pnl.size
    m = pnl.mean()
    sig = pnl.std()
    if sig == 0.0:
        return m, sig, np.zeros(n)
    return m, sig, (pnl - m) * r / (n * sig)


def sharpe_loss(alpha, r, epsilon: float = 1e-8) -> LossEval:
    """value = -mean(pnl) / (std_pop(pnl) + epsilon).

    Invariant under positive rescaling of alpha up to epsilon effects, so the
    optimizer cannot cheat by inflating position sizes.
    """
    a, v = _check(alpha, r)
    pnl = a * v
    m, sig, dsig = _std_partials(pnl, v)
    s = sig + epsilon
    value = -m / s
    grad = -(v / a.size) / s + m * dsig / (s * s)
    return LossEval(float(value), grad)


def modsharpe_loss(alpha, r, epsilon: float = 1e-8) -> LossEval:
    """value = ln(mean((alpha-r)^2) + eps_log) * mean(pnl) / (std_pop(pnl) + epsilon).

    The log factor restores scale sensitivity that sharpe_loss deliberately
    lacks: the value moves linearly in ln c when alpha is scaled by c.  The
    squared-deviation term is reduced by mean so its magnitude does not grow
    with batch size.
    """
    a, v = _check(alpha, r)
    d = a - v
    q = float(np.mean(d * d))
    if q == 0.0:
        raise DegenerateInput("positions identical to returns: log factor undefined")
    pnl = a * v
    m, sig, dsig = _std_partials(pnl, v)
    s = sig + epsilon
    log_q = np.log(q + EPS_LOG)
    ratio = m / s
    dq = 2.0 * d / a.size
    dratio = (v / a.size) / s - m * dsig / (s * s)
    grad = dq / (q + EPS_LOG) * ratio + log_q * dratio
    return LossEval(float(log_q * ratio), grad)


def _drawdown_path(pnl):
    """(value, peak, trough) of the deepest drawdown of cumsum(pnl).

    Equity starts flat at zero (index -1 conceptually holds cumulative 0),
    so a loss on day 0 is already a drawdown.  `peak` and `trough` index the
    prepended cumulative path of length n+1; ties break earliest trough,
    then earliest peak, to keep subgradients deterministic.
    """
    cum = np.concatenate([[0.0], np.cumsum(pnl)])
    runmax = np.maximum.accumulate(cum)
    dd = cum - runmax
    trough = int(np.argmin(dd))  # argmin takes the first minimum
    value = -float(dd[trough])
    peak = int(np.argmax(cum[: trough + 1] == runmax[trough]))
    return value, peak, trough


def mdd_loss(alpha, r) -> LossEval:
    """Drawdown magnitude of the batch pnl path (always >= 0).

    Subgradient: -r_i on days strictly after the realized peak up to and
    including the trough, 0 elsewhere.
    """
    a, v = _check(alpha, r)
    value, peak, trough = _drawdown_path(a * v)
    grad = np.zeros(a.size)
    if value > 0.0:
        # cumulative index k corresponds to pnl index k-1
        grad[peak : trough] = -v[peak : trough]
    return LossEval(value, grad)


def logmdd_loss(alpha, r) -> LossEval:
    """value = ln(1 + drawdown magnitude); compresses deep drawdowns."""
    inner = mdd_loss(alpha, r)
    return LossEval(float(np.log1p(inner.value)), inner.grad / (1.0 + inner.value))


def riskadj_loss(alpha, r, riskadj_lambda: float = 0.3, riskadj_gamma: float = 0.01) -> LossEval:
    """-mean(pnl) + lambda * drawdown magnitude + gamma * mean((alpha-r)^2)."""
    p = pnl_loss(alpha, r)
    m = mdd_loss(alpha, r)
    q = mse_loss(alpha, r)
    return LossEval(
        p.value + riskadj_lambda * m.value + riskadj_gamma * q.value,
        p.grad + riskadj_lambda * m.grad + riskadj_gamma * q.grad,
    )


class LossKind(Enum):
    MSE = "mse"
    PNL = "pnl"
    SHARPE = "sharpe"
    MODSHARPE = "modsharpe"
    MDD = "mdd"
    LOGMDD = "logmdd"
    RISKADJ = "riskadj"

    @classmethod
    def from_label(cls, label: str) -> "LossKind":
        for k in cls:
            if k.value == label:
                return k
        raise ValueError(f"unknown loss kind {label!r}; expected one of "
                         f"{[k.value for k in cls]}")


@dataclass
class LossSpec:
    """Loss selection plus the few tunables the loss family exposes."""

    kind: LossKind = LossKind.MSE
    epsilon: float = 1e-8
    riskadj_lambda: float = 0.3
    riskadj_gamma: float = 0.01

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = LossKind.from_label(self.kind)
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    def evaluate(self, alpha, r) -> LossEval:
        k = self.kind
        if k is LossKind.MSE:
            return mse_loss(alpha, r)
        if k is LossKind.PNL:
            return pnl_loss(alpha, r)
        if k is LossKind.SHARPE:
            return sharpe_loss(alpha, r, self.epsilon)
        if k is LossKind.MODSHARPE:
            return modsharpe_loss(alpha, r, self.epsilon)
        if k is LossKind.MDD:
            return mdd_loss(alpha, r)
        if k is LossKind.LOGMDD:
            return logmdd_loss(alpha, r)
        return riskadj_loss(alpha, r, self.riskadj_lambda, self.riskadj_gamma)


@dataclass
class TvrRegSpec:
    """Turnover band penalty parameters.

    hinge_floor 0.0 is the standard hinge (penalty zero inside [bottom, top]);
    1.0 reproduces the literal published formula, which is >= 2*strength
    everywhere and gradient-dead near the band.
    """

    strength: float = 1.0
    top: float = 1.0
    bottom: float = 0.3
    hinge_floor: float = 0.0

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError(f"strength must be >= 0, got {self.strength}")
        if self.bottom > self.top:
            raise ValueError(f"bottom {self.bottom} exceeds top {self.top}")


def tvr_reg(positions_window, spec: TvrRegSpec = TvrRegSpec()) -> LossEval:
    """Penalty keeping the window's mean daily turnover inside [bottom, top].

    value = strength * (max(floor, tvr - top) + max(floor, bottom - tvr)).
    The gradient is over the flattened (day-major) window, using sign(0) = 0
    for the L1 subgradient and the flat branch at hinge kinks.
    """
    p = np.asarray(positions_window, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] < 2:
        raise InsufficientRows(f"turnover window needs >= 2 rows, got {p.shape[0]}")
    diffs = np.diff(p, axis=0)
    n_days = p.shape[0] - 1
    tvr = float(np.abs(diffs).sum() / n_days)

    floor = spec.hinge_floor
    value = spec.strength * (max(floor, tvr - spec.top) + max(floor, spec.bottom - tvr))
    dval_dtvr = spec.strength * (
        (1.0 if tvr - spec.top > floor else 0.0)
        - (1.0 if spec.bottom - tvr > floor else 0.0)
    )
    if dval_dtvr == 0.0:
        return LossEval(value, np.zeros(p.size))
    s = np.sign(diffs)
    dtvr = np.zeros_like(p)
    dtvr[1:] += s
    dtvr[:-1] -= s
    dtvr /= n_days
    return LossEval(value, dval_dtvr * dtvr.ravel())
