"""Classical heuristic strategies and shared position post-processing.

A strategy maps a daily returns panel to a PositionsMatrix of the same shape
holding decision-time signals: the row at date d is the position decided from
information through day d.  The one-day execution delay is applied by the
backtest, never here, so strategies stay lag-agnostic and model-generated
and heuristic matrices compose identically.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import ReturnsPanel


@dataclass
class PositionsMatrix:
    """Portfolio weights per date and asset."""

    dates: list
    assets: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.dates), len(self.assets)):
            raise ValueError(f"positions shape {self.values.shape} does not match "
                             f"{len(self.dates)} dates x {len(self.assets)} assets")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("positions contain non-finite entries")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def to_csv(self) -> str:
        lines = ["date," + ",".join(self.assets)]
        for i, d in enumerate(self.dates):
            lines.append(d.isoformat() + "," + ",".join(repr(float(v)) for v in self.values[i]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "PositionsMatrix":
        rows = list(csv.reader(text.strip().splitlines()))
        assets = rows[0][1:]
        dates = [dt.date.fromisoformat(r[0]) for r in rows[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
        return cls(dates, assets, values)


class AlphaKind(Enum):
    REVERSION = "reversion"
    MOMENTUM = "momentum"
    MEAN_REVERSION = "mean_reversion"
    BUY_HOLD = "buy_hold"
    MODEL = "model"

    @classmethod
    def from_label(cls, label: str) -> "AlphaKind":
        for k in cls:
            if k.value == label:
                return k
        raise ValueError(f"unknown alpha kind {label!r}")


@dataclass
class AlphaDef:
    """Named strategy definition; `checkpoint` applies to MODEL kind only."""

    name: str
    kind: AlphaKind
    window: int = 1
    checkpoint: str | None = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = AlphaKind.from_label(self.kind)
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")


def momentum(panel: ReturnsPanel, w: int) -> PositionsMatrix:
    """Trailing moving average of returns over the w days ending at d.

    The first w-1 days lack a full window and carry zero positions so all
    strategy matrices stay date-aligned.
    """
    if w < 1:
        raise ValueError(f"window must be >= 1, got {w}")
    r = panel.values
    out = np.zeros_like(r)
    if r.shape[0] >= w:
        cs = np.vstack([np.zeros((1, r.shape[1])), np.cumsum(r, axis=0)])
        out[w - 1 :] = (cs[w:] - cs[:-w]) / w
    return PositionsMatrix(list(panel.dates), list(panel.assets), out)


def mean_reversion(panel: ReturnsPanel, w: int) -> PositionsMatrix:
    """Negated momentum: bet against the trailing average move."""
    m = momentum(panel, w)
    return PositionsMatrix(m.dates, m.assets, -m.values)


def reversion(panel: ReturnsPanel) -> PositionsMatrix:
    """Contrarian signal: the position decided on day d is minus the return
    realized over day d (identical to mean_reversion with w=1).  Under the
    backtest's one-day lag it trades against each day's move and earns the
    next day's reversal."""
    return mean_reversion(panel, 1)


def buy_and_hold(panel: ReturnsPanel) -> PositionsMatrix:
    """Constant equal weights 1/M (weight-space hold, so turnover is 0)."""
    m = panel.n_assets
    values = np.full((panel.n_days, m), 1.0 / m)
    return PositionsMatrix(list(panel.dates), list(panel.assets), values)


def l1_normalize(positions):
    """Scale each date's row to unit L1 norm (booksize 1); zero rows stay zero.

    Accepts a PositionsMatrix or a bare array and returns the same type.
    """
    if isinstance(positions, PositionsMatrix):
        return PositionsMatrix(list(positions.dates), list(positions.assets),
                               l1_normalize(positions.values))
    v = np.asarray(positions, dtype=float)
    norms = np.abs(v).sum(axis=-1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return v / safe


def build_heuristic(adef: AlphaDef, panel: ReturnsPanel) -> PositionsMatrix:
    """Instantiate one of the heuristic strategies on a panel."""
    if adef.kind is AlphaKind.REVERSION:
        return reversion(panel)
    if adef.kind is AlphaKind.MOMENTUM:
        return momentum(panel, adef.window)
    if adef.kind is AlphaKind.MEAN_REVERSION:
        return mean_reversion(panel, adef.window)
    if adef.kind is AlphaKind.BUY_HOLD:
        return buy_and_hold(panel)
    raise ValueError(f"{adef.name}: {adef.kind.value} is not a heuristic strategy")
