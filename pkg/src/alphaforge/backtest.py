"""Lag-correct simulation of a positions matrix against a returns panel.

pnl(d) = sum_a alpha_a(d - lag) * r_a(d): the position earning day d's return
is the one decided `lag` trading days earlier.  Position rows are looked up
by date, so evaluating a sub-interval gives exactly the corresponding slice
of the full run.  Days without a lagged position (warmup, or a strategy that
starts late) are kept with zero pnl so every strategy's Sharpe uses the same
day count.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .alphas import PositionsMatrix, l1_normalize
from .data import ReturnsPanel
from .errors import (
    AssetMismatch,
    DateMisalignment,
    InsufficientData,
    InsufficientOverlap,
)
from .metrics import MetricsReport, PnlSeries, report_from_pnl

DEFAULT_TEST_START = dt.date(2024, 4, 25)


@dataclass
class BacktestConfig:
    """lag_days >= 1 is enforced; zero-lag (lookahead) runs must say so."""

    lag_days: int = 1
    test_start: dt.date = DEFAULT_TEST_START
    normalize: bool = True
    allow_lookahead: bool = False

    def __post_init__(self):
        if isinstance(self.test_start, str):
            self.test_start = dt.date.fromisoformat(self.test_start)
        if self.lag_days < 0:
            raise ValueError(f"lag_days must be >= 0, got {self.lag_days}")
        if self.lag_days < 1 and not self.allow_lookahead:
            raise ValueError("lag_days = 0 looks ahead; pass allow_lookahead=True "
                             "if that is really intended")


@dataclass
class SimulationResult:
    """Raw engine output: realized pnl plus the position row held each day."""

    pnl: PnlSeries
    positions_used: np.ndarray


@dataclass
class BacktestResult:
    """Simulation plus per-interval metric reports."""

    pnl: PnlSeries
    cum_pnl: np.ndarray
    report_total: MetricsReport
    report_test: MetricsReport | None
    positions_used: np.ndarray
    name: str = ""


def run_backtest(positions: PositionsMatrix, panel: ReturnsPanel, lag: int = 1,
                 start: dt.date | None = None, end: dt.date | None = None,
                 normalize: bool = False) -> SimulationResult:
    """Simulate positions against the panel on [start, end].

    Positions dates must be a subset of panel dates with identical asset
    order.  Rows are matched by date; the row used on day d is the positions
    row `lag` entries earlier in the positions matrix, or zero when there is
    none.
    """
    if list(positions.assets) != list(panel.assets):
        raise AssetMismatch(f"positions assets {positions.assets} != panel assets {panel.assets}")
    panel_index = {d: i for i, d in enumerate(panel.dates)}
    for d in positions.dates:
        if d not in panel_index:
            raise DateMisalignment(f"positions date {d} not present in panel")

    values = l1_normalize(positions.values) if normalize else positions.values
    pos_index = {d: i for i, d in enumerate(positions.dates)}

    eval_dates = [d for d in panel.dates
                  if (start is None or d >= start) and (end is None or d <= end)]
    if not eval_dates:
        raise InsufficientData("no panel dates in the requested interval")

    m = len(panel.assets)
    used = np.zeros((len(eval_dates), m))
    pnl = np.zeros(len(eval_dates))
    for i, d in enumerate(eval_dates):
        j = pos_index.get(d)
        if j is not None and j - lag >= 0:
            used[i] = values[j - lag]
            pnl[i] = used[i] @ panel.values[panel_index[d]]
    return SimulationResult(PnlSeries(eval_dates, pnl), used)


def run(positions: PositionsMatrix, panel: ReturnsPanel,
        config: BacktestConfig | None = None, name: str = "") -> BacktestResult:
    """Full backtest: simulate, then report over the total interval and over
    the test suffix [test_start, end]."""
    cfg = config if config is not None else BacktestConfig()
    sim = run_backtest(positions, panel, lag=cfg.lag_days, normalize=cfg.normalize)
    report_total = report_from_pnl(sim.pnl.values, sim.positions_used, name=name)

    mask = np.array([d >= cfg.test_start for d in sim.pnl.dates])
    report_test = None
    if mask.any():
        test_pnl = sim.pnl.values[mask]
        test_used = sim.positions_used[mask]
        report_test = report_from_pnl(test_pnl, test_used, name=name)
    return BacktestResult(
        pnl=sim.pnl,
        cum_pnl=np.cumsum(sim.pnl.values),
        report_total=report_total,
        report_test=report_test,
        positions_used=sim.positions_used,
        name=name,
    )


def _pnl_of(obj) -> PnlSeries:
    return obj.pnl if hasattr(obj, "pnl") else obj


def correlation_matrix(results) -> np.ndarray:
    """Pairwise Pearson correlation of daily pnl series over common dates.

    Accepts BacktestResults or PnlSeries.  Each pair needs >= 3 common days.
    """
    series = [_pnl_of(r) for r in results]
    n = len(series)
    out = np.eye(n)
    for i in range(n):
        di = {d: k for k, d in enumerate(series[i].dates)}
        for j in range(i + 1, n):
            common = [d for d in series[j].dates if d in di]
            if len(common) < 3:
                raise InsufficientOverlap(
                    f"series {i} and {j} share only {len(common)} dates (need >= 3)")
            dj = {d: k for k, d in enumerate(series[j].dates)}
            a = series[i].values[[di[d] for d in common]]
            b = series[j].values[[dj[d] for d in common]]
            am, bm = a - a.mean(), b - b.mean()
            denom = np.sqrt((am * am).sum() * (bm * bm).sum())
            with np.errstate(invalid="ignore", divide="ignore"):
                c = (am * bm).sum() / denom if denom > 0 else np.nan
            out[i, j] = out[j, i] = c
    return out
