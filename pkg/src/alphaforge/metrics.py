"""Evaluation metrics over realized daily pnl: Sharpe, profit, drawdown, turnover.

All functions accept plain array-likes; :class:`PnlSeries` just pairs values
with their dates for reporting.  Conventions that matter downstream:

* Sharpe uses the population standard deviation (divide by N) and scales the
  mean/std ratio by sqrt(N) where N is the evaluated series length.  No
  annualization unless explicitly requested.
* Drawdown is measured on cumulative pnl starting from flat equity, so a
  first-day loss already counts as drawdown.  The series value is <= 0.
* Turnover is the L1 distance between consecutive position rows; reports
  store the mean over days.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, ZeroVolatility

METRICS_CSV_HEADER = "alpha,turnover,max_drawdown,profit_pct,sharpe"


@dataclass
class PnlSeries:
    """Daily portfolio pnl (dimensionless returns) with matching dates."""

    dates: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.dates) != len(self.values):
            raise ValueError(f"{len(self.dates)} dates vs {len(self.values)} values")

    def __len__(self) -> int:
        return len(self.values)


def _values(pnl) -> np.ndarray:
    if isinstance(pnl, PnlSeries):
        return pnl.values
    return np.asarray(pnl, dtype=float)


def sharpe_ratio(pnl, annualize_days: int | None = None) -> float:
    """sqrt(N) * mean / population std.

    `annualize_days` replaces N in the sqrt with a per-period scaling
    (e.g. 365); off by default so Sharpe depends only on the series itself.
    """
    v = _values(pnl)
    n = len(v)
    if n < 2:
        raise InsufficientData(f"sharpe_ratio needs >= 2 observations, got {n}")
    std = float(v.std())  # population: no Bessel correction
    if std == 0.0:
        raise ZeroVolatility("pnl series has zero standard deviation")
    scale = np.sqrt(annualize_days if annualize_days is not None else n)
    return float(scale * v.mean() / std)


def total_pnl(pnl) -> float:
    """Sum of daily pnl.  Reported as percent (x100) in MetricsReport."""
    return float(_values(pnl).sum())


def max_drawdown(pnl, literal: bool = False) -> float:
    """Largest peak-to-trough decline of cumulative pnl, always <= 0.

    Equity starts flat at zero, so the running peak includes the starting
    point: max_drawdown([-1]) == -1.  With `literal=True` the running max is
    taken over the raw daily pnl instead of its cumulative sum (a debug
    variant kept for comparison only, not a meaningful trading quantity).
    """
    v = _values(pnl)
    if len(v) < 1:
        raise InsufficientData("max_drawdown needs >= 1 observation")
    cum = np.cumsum(v)
    if literal:
        peak = np.maximum.accumulate(v)
    else:
        peak = np.maximum.accumulate(np.concatenate([[0.0], cum]))[1:]
    return float(np.min(cum - peak))


def turnover(positions) -> np.ndarray:
    """Daily L1 rebalance distance: element d is sum_a |pos[d+1,a] - pos[d,a]|."""
    p = np.asarray(positions, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] < 2:
        raise InsufficientData(f"turnover needs >= 2 position rows, got {p.shape[0]}")
    return np.abs(np.diff(p, axis=0)).sum(axis=1)


def mean_daily_turnover(positions) -> float:
    return float(turnover(positions).mean())


def try_sharpe(pnl, annualize_days: int | None = None):
    """sharpe_ratio, or None where it is undefined (flat or too-short series)."""
    try:
        return sharpe_ratio(pnl, annualize_days)
    except (ZeroVolatility, InsufficientData):
        return None


@dataclass
class MetricsReport:
    """One strategy's Sharpe / profit / drawdown / turnover on one interval.

    sharpe is None where the ratio is undefined (zero-volatility pnl), which
    serializes as an empty CSV field.
    """

    sharpe: float | None
    profit_pct: float
    max_drawdown: float
    mean_daily_turnover: float
    n_days: int
    name: str = ""

    def __post_init__(self):
        if self.max_drawdown > 0:
            raise ValueError(f"max_drawdown must be <= 0, got {self.max_drawdown}")
        if self.mean_daily_turnover < 0:
            raise ValueError(f"turnover must be >= 0, got {self.mean_daily_turnover}")

    def csv_row(self) -> str:
        return ",".join([
            self.name,
            repr(float(self.mean_daily_turnover)),
            repr(float(self.max_drawdown)),
            repr(float(self.profit_pct)),
            "" if self.sharpe is None else repr(float(self.sharpe)),
        ])


def report_from_pnl(pnl, positions, name: str = "") -> MetricsReport:
    """Assemble a MetricsReport from a realized pnl series and the positions
    that produced it."""
    v = _values(pnl)
    p = np.atleast_2d(np.asarray(positions, dtype=float))
    return MetricsReport(
        sharpe=try_sharpe(v),
        profit_pct=100.0 * total_pnl(v),
        max_drawdown=max_drawdown(v),
        mean_daily_turnover=mean_daily_turnover(p) if p.shape[0] >= 2 else 0.0,
        n_days=len(v),
        name=name,
    )


def evaluate(positions, panel, start=None, end=None, name: str = "", lag: int = 1) -> MetricsReport:
    """Backtest `positions` against `panel` on [start, end] and report metrics.

    Thin wrapper over the backtest engine so callers holding a positions
    matrix can get Table-style rows in one call.
    """
    from .backtest import run_backtest  # deferred: backtest imports this module

    result = run_backtest(positions, panel, lag=lag, start=start, end=end)
    return report_from_pnl(result.pnl, result.positions_used, name=name)
