"""Candlestick ingestion, returns panels and sliding-window training samples.

Input files are per-asset, per-frequency CSVs (one candle per row, UTC epoch
seconds at the candle open).  Downstream everything is numpy: a
:class:`ReturnsPanel` is a dates-by-assets matrix of simple returns, and a
:class:`FeatureWindow` is one training sample built from 20 days of history
at mixed frequency (14 daily returns, then 3 days of hourly returns, then
3 days of 15-minute returns), min-max scaled to [0, 1].
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    EmptyIntersection,
    FrequencyGap,
    InsufficientData,
    InsufficientHistory,
    MalformedRow,
    NegativePrice,
    NonMonotonicTimestamp,
)

_EPOCH = dt.date(1970, 1, 1)

CSV_COLUMNS = (
    "timestamp",
    "open",
    "high",
    "low",
    "close",
    "base_volume",
    "quote_volume",
    "taker_buy_base",
    "taker_buy_quote",
    "num_trades",
)

# Window layout: 20 days of history per sample.  The oldest 14 days enter as
# daily returns, the next 3 days as hourly returns, the last 3 days as
# 15-minute returns; the target is the daily return realized on the as-of day.
DAILY_STEPS = 14
HOURLY_DAYS = 3
M15_DAYS = 3
WINDOW_DAYS = DAILY_STEPS + HOURLY_DAYS + M15_DAYS
HOURLY_STEPS = HOURLY_DAYS * 24
M15_STEPS = M15_DAYS * 96
FEATURE_LEN = DAILY_STEPS + HOURLY_STEPS + M15_STEPS  # 374


def to_epoch_day(d: dt.date) -> int:
    return (d - _EPOCH).days


def from_epoch_day(day: int) -> dt.date:
    return _EPOCH + dt.timedelta(days=int(day))


class Frequency(Enum):
    DAILY = "1d"
    HOURLY = "1h"
    M15 = "15m"

    @property
    def seconds(self) -> int:
        return {"1d": 86400, "1h": 3600, "15m": 900}[self.value]

    @classmethod
    def from_label(cls, label: str) -> "Frequency":
        for f in cls:
            if f.value == label:
                return f
        raise ValueError(f"unknown frequency label {label!r}")


@dataclass
class CandleSeries:
    """Validated OHLCV series for one asset at one frequency.

    Timestamps are strictly increasing but not necessarily contiguous:
    missing candles are flagged via :meth:`gap_indices`, never filled.
    """

    asset_id: str
    frequency: Frequency
    ts: np.ndarray          # int64 epoch seconds, candle open
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    base_volume: np.ndarray
    quote_volume: np.ndarray
    taker_buy_base: np.ndarray
    taker_buy_quote: np.ndarray
    num_trades: np.ndarray  # int64

    def __len__(self) -> int:
        return len(self.ts)

    def gap_indices(self) -> np.ndarray:
        """Indices i where the candle at i+1 is not one interval after i."""
        if len(self.ts) < 2:
            return np.empty(0, dtype=np.int64)
        step = np.diff(self.ts)
        return np.nonzero(step != self.frequency.seconds)[0]

    def epoch_days(self) -> np.ndarray:
        """Calendar day of each candle open (UTC)."""
        return self.ts // 86400


def load_candles(path, frequency: Frequency) -> CandleSeries:
    """Load and validate one candle CSV.

    Rows are sorted by timestamp.  A duplicated timestamp raises
    NonMonotonicTimestamp, a non-positive price NegativePrice, and any parse
    failure or OHLC bound violation MalformedRow; all report the row index.
    """
    path = str(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise MalformedRow(f"{path}: header {header!r} does not match {CSV_COLUMNS}")
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise MalformedRow(f"{path}: row {i}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                rec = (
                    int(row[0]),
                    float(row[1]), float(row[2]), float(row[3]), float(row[4]),
                    float(row[5]), float(row[6]), float(row[7]), float(row[8]),
                    int(float(row[9])),
                )
            except ValueError as exc:
                raise MalformedRow(f"{path}: row {i}: {exc}") from None
            rows.append((i, rec))

    rows.sort(key=lambda item: item[1][0])
    n = len(rows)
    cols = [np.empty(n, dtype=np.int64) if j in (0, 9) else np.empty(n) for j in range(10)]
    for k, (_, rec) in enumerate(rows):
        for j in range(10):
            cols[j][k] = rec[j]

    ts = cols[0]
    for k in range(1, n):
        if ts[k] == ts[k - 1]:
            raise NonMonotonicTimestamp(f"{path}: duplicated timestamp {ts[k]} at sorted row {k}")

    o, h, lo, c = cols[1], cols[2], cols[3], cols[4]
    for k in range(n):
        src = rows[k][0]
        if min(o[k], h[k], lo[k], c[k]) <= 0:
            raise NegativePrice(f"{path}: row {src}: non-positive price")
        if h[k] < max(o[k], c[k]) or lo[k] > min(o[k], c[k]):
            raise MalformedRow(f"{path}: row {src}: high/low outside open/close bounds")
        if min(cols[5][k], cols[6][k], cols[7][k], cols[8][k]) < 0 or cols[9][k] < 0:
            raise MalformedRow(f"{path}: row {src}: negative volume or trade count")

    asset_id = _asset_from_path(path)
    return CandleSeries(asset_id, frequency, ts, o, h, lo, c,
                        cols[5], cols[6], cols[7], cols[8], cols[9])


def _asset_from_path(path: str) -> str:
    import os

    stem = os.path.splitext(os.path.basename(path))[0]
    for suffix in ("_1d", "_1h", "_15m"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def compute_returns(series: CandleSeries) -> np.ndarray:
    """Simple close-to-close returns: element i is close[i+1] / close[i] - 1."""
    if len(series) < 2:
        raise InsufficientData(f"{series.asset_id}: need at least 2 candles, have {len(series)}")
    c = series.close
    return c[1:] / c[:-1] - 1.0


@dataclass
class ReturnsPanel:
    """Dates-by-assets matrix of simple daily returns."""

    dates: list        # list[dt.date], ascending
    assets: list       # list[str], input order
    values: np.ndarray  # shape (len(dates), len(assets))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.dates), len(self.assets)):
            raise ValueError(f"panel shape {self.values.shape} does not match "
                             f"{len(self.dates)} dates x {len(self.assets)} assets")
        if self.values.size and self.values.min() <= -1.0:
            raise ValueError("panel contains a return <= -1")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def date_index(self, d: dt.date) -> int:
        lo = int(np.searchsorted(np.array([to_epoch_day(x) for x in self.dates]), to_epoch_day(d)))
        if lo >= len(self.dates) or self.dates[lo] != d:
            raise KeyError(f"date {d} not in panel")
        return lo

    def restrict(self, start: dt.date | None = None, end: dt.date | None = None) -> "ReturnsPanel":
        keep = [i for i, d in enumerate(self.dates)
                if (start is None or d >= start) and (end is None or d <= end)]
        return ReturnsPanel([self.dates[i] for i in keep], list(self.assets), self.values[keep])

    def to_csv(self) -> str:
        lines = ["date," + ",".join(self.assets)]
        for i, d in enumerate(self.dates):
            lines.append(d.isoformat() + "," + ",".join(repr(float(v)) for v in self.values[i]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ReturnsPanel":
        rows = list(csv.reader(text.strip().splitlines()))
        assets = rows[0][1:]
        dates = [dt.date.fromisoformat(r[0]) for r in rows[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
        return cls(dates, assets, values)


def build_panel(series_list) -> ReturnsPanel:
    """Daily returns panel over the date intersection of all input series.

    Returns are computed from consecutive closes on the common date grid, so
    every asset's return at a given panel date spans the same calendar
    interval even when the intersection has holes.
    """
    if not series_list:
        raise EmptyIntersection("no input series")
    for s in series_list:
        if s.frequency is not Frequency.DAILY:
            raise ValueError(f"{s.asset_id}: build_panel requires daily series")

    day_sets = [set(s.epoch_days().tolist()) for s in series_list]
    common = set.intersection(*day_sets)
    if len(common) < 2:
        raise EmptyIntersection(
            f"common dates across {len(series_list)} series: {len(common)} (need >= 2)")
    days = np.array(sorted(common), dtype=np.int64)

    cols = []
    for s in series_list:
        idx = np.searchsorted(s.epoch_days(), days)
        closes = s.close[idx]
        cols.append(closes[1:] / closes[:-1] - 1.0)
    values = np.column_stack(cols)
    dates = [from_epoch_day(d) for d in days[1:]]
    return ReturnsPanel(dates, [s.asset_id for s in series_list], values)


def minmax_scale(v) -> np.ndarray:
    """Map v affinely onto [0, 1]; a constant vector maps to all zeros."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("minmax_scale: empty input")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


@dataclass
class FeatureWindow:
    """One training sample: scaled mixed-frequency returns plus raw target."""

    asset_id: str
    as_of: dt.date
    features: np.ndarray  # length FEATURE_LEN, all in [0, 1]
    target: float         # unscaled daily return realized on as_of


class WindowBuilder:
    """Builds feature windows from one asset's daily/hourly/15m series.

    Precomputes per-frequency return arrays once so that per-date window
    extraction is a handful of searchsorted slices.
    """

    def __init__(self, daily: CandleSeries, hourly: CandleSeries, m15: CandleSeries,
                 per_segment: bool = False):
        if daily.frequency is not Frequency.DAILY or hourly.frequency is not Frequency.HOURLY \
                or m15.frequency is not Frequency.M15:
            raise ValueError("WindowBuilder requires (daily, hourly, m15) series in that order")
        self.asset_id = daily.asset_id
        self.per_segment = per_segment
        self._day_slots = daily.epoch_days()
        self._day_close = daily.close
        self._hour_slots = hourly.ts // 3600
        self._hour_close = hourly.close
        self._m15_slots = m15.ts // 900
        self._m15_close = m15.close

    def _slot_closes(self, slots: np.ndarray, closes: np.ndarray, need: np.ndarray,
                     what: str) -> np.ndarray:
        if len(slots) == 0 or need[0] < slots[0] or need[-1] > slots[-1]:
            raise InsufficientHistory(
                f"{self.asset_id}: {what} data does not cover required range")
        idx = np.searchsorted(slots, need)
        if not np.array_equal(slots[idx], need):
            missing = need[slots[idx] != need]
            raise FrequencyGap(
                f"{self.asset_id}: {what} candles missing at {len(missing)} slot(s), "
                f"first {missing[0]}")
        return closes[idx]

    def window(self, as_of: dt.date) -> FeatureWindow:
        t = to_epoch_day(as_of)

        day_need = np.arange(t - WINDOW_DAYS - 1, t - HOURLY_DAYS - M15_DAYS, dtype=np.int64)
        dc = self._slot_closes(self._day_slots, self._day_close, day_need, "daily")
        daily_ret = dc[1:] / dc[:-1] - 1.0

        h0 = (t - HOURLY_DAYS - M15_DAYS) * 24  # first hour of the hourly block
        hour_need = np.arange(h0 - 1, h0 + HOURLY_STEPS, dtype=np.int64)
        hc = self._slot_closes(self._hour_slots, self._hour_close, hour_need, "hourly")
        hourly_ret = hc[1:] / hc[:-1] - 1.0

        q0 = (t - M15_DAYS) * 96
        m15_need = np.arange(q0 - 1, q0 + M15_STEPS, dtype=np.int64)
        qc = self._slot_closes(self._m15_slots, self._m15_close, m15_need, "15m")
        m15_ret = qc[1:] / qc[:-1] - 1.0

        tgt_need = np.arange(t - 1, t + 1, dtype=np.int64)
        tc = self._slot_closes(self._day_slots, self._day_close, tgt_need, "daily")
        target = float(tc[1] / tc[0] - 1.0)

        if self.per_segment:
            features = np.concatenate(
                [minmax_scale(daily_ret), minmax_scale(hourly_ret), minmax_scale(m15_ret)])
        else:
            features = minmax_scale(np.concatenate([daily_ret, hourly_ret, m15_ret]))
        return FeatureWindow(self.asset_id, as_of, features, target)

    def valid_days(self) -> list:
        """Epoch days for which a window (including target) can be built."""
        if len(self._day_slots) == 0:
            return []
        lo = int(self._day_slots[0]) + WINDOW_DAYS + 1
        hi = int(self._day_slots[-1])
        out = []
        for t in range(lo, hi + 1):
            try:
                self._check_day(t)
            except (InsufficientHistory, FrequencyGap):
                continue
            out.append(t)
        return out

    def _check_day(self, t: int):
        day_need = np.arange(t - WINDOW_DAYS - 1, t - HOURLY_DAYS - M15_DAYS, dtype=np.int64)
        self._slot_closes(self._day_slots, self._day_close, day_need, "daily")
        h0 = (t - HOURLY_DAYS - M15_DAYS) * 24
        self._slot_closes(self._hour_slots, self._hour_close,
                          np.arange(h0 - 1, h0 + HOURLY_STEPS, dtype=np.int64), "hourly")
        q0 = (t - M15_DAYS) * 96
        self._slot_closes(self._m15_slots, self._m15_close,
                          np.arange(q0 - 1, q0 + M15_STEPS, dtype=np.int64), "15m")
        self._slot_closes(self._day_slots, self._day_close,
                          np.arange(t - 1, t + 1, dtype=np.int64), "daily")


def make_windows(daily: CandleSeries, hourly: CandleSeries, m15: CandleSeries,
                 as_of: dt.date, per_segment: bool = False) -> FeatureWindow:
    """Build the feature window for one asset and one as-of date."""
    return WindowBuilder(daily, hourly, m15, per_segment=per_segment).window(as_of)


@dataclass
class WindowDataset:
    """Panel-aligned feature windows for a whole universe.

    ``features[i, a]`` is asset a's window for as-of date ``dates[i]``;
    ``targets[i, a]`` the matching next-day return.  ``pooled()`` collapses
    the asset axis by mean for market-level (singular) models.
    """

    assets: list
    dates: list                # as-of dates (dt.date)
    features: np.ndarray       # (n_dates, n_assets, FEATURE_LEN)
    targets: np.ndarray        # (n_dates, n_assets)

    def pooled(self) -> np.ndarray:
        return self.features.mean(axis=1)

    def asset_features(self, a: int) -> np.ndarray:
        return self.features[:, a, :]

    def split_at(self, split: dt.date):
        """(train, test) datasets: as-of dates before `split` vs from it on."""
        k = sum(1 for d in self.dates if d < split)
        head = WindowDataset(self.assets, self.dates[:k], self.features[:k], self.targets[:k])
        tail = WindowDataset(self.assets, self.dates[k:], self.features[k:], self.targets[k:])
        return head, tail


def build_window_dataset(series_map: dict, assets, per_segment: bool = False) -> WindowDataset:
    """Assemble windows for every date where all assets can produce one.

    `series_map` maps asset id to {Frequency: CandleSeries}.
    """
    builders = []
    for a in assets:
        per = series_map[a]
        builders.append(WindowBuilder(per[Frequency.DAILY], per[Frequency.HOURLY],
                                      per[Frequency.M15], per_segment=per_segment))
    day_sets = [set(b.valid_days()) for b in builders]
    common = sorted(set.intersection(*day_sets)) if day_sets else []
    if not common:
        raise InsufficientHistory("no date has a complete window for every asset")

    n, m = len(common), len(assets)
    features = np.empty((n, m, FEATURE_LEN))
    targets = np.empty((n, m))
    dates = [from_epoch_day(d) for d in common]
    for i, d in enumerate(dates):
        for a, b in enumerate(builders):
            w = b.window(d)
            features[i, a] = w.features
            targets[i, a] = w.target
    return WindowDataset(list(assets), dates, features, targets)
