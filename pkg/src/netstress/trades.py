"""Local optimality of trades, random-day baseline, losses and activity sets."""

from __future__ import annotations

import math
from collections import defaultdict
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .ingest import PriceBar, TradeRecord, TradingCalendar

LABEL_COLUMNS = ["trade", "symbol", "day", "side", "price", "shares", "next_day",
                 "counterfactual", "locally_optimal"]


def label_optimality(trades: Sequence[TradeRecord], bars: Mapping[tuple[str, date], PriceBar],
                     calendar: TradingCalendar) -> tuple[pd.DataFrame, dict]:
    """Label each trade against the next trading day's range.

    A buy is locally suboptimal when its price exceeds the next day's maximum;
    a sell when its price exceeds the next day's minimum. Trades whose next
    trading day has no bar for the stock are dropped and counted.
    """
    rows = []
    dropped = 0
    for i, t in enumerate(trades):
        nd = calendar.successor(t.day)
        nb = bars.get((t.symbol, nd)) if nd is not None else None
        if nb is None:
            dropped += 1
            continue
        cf = nb.day_max if t.side == "buy" else nb.day_min
        rows.append((i, t.symbol, t.day, t.side, t.price, t.shares, nd, cf, not t.price > cf))
    labels = pd.DataFrame(rows, columns=LABEL_COLUMNS)
    summary = {"labeled": len(labels), "dropped": dropped}
    for side in ("buy", "sell"):
        sub = labels[labels["side"] == side]
        summary[f"{side}_suboptimal_rate"] = float((~sub["locally_optimal"]).mean()) if len(sub) else None
    summary["suboptimal_rate"] = float((~labels["locally_optimal"]).mean()) if len(labels) else None
    return labels, summary


def add_loss(labels: pd.DataFrame, bars: Mapping[tuple[str, date], PriceBar], mark: str = "close") -> pd.DataFrame:
    """Attach ``loss`` = shares * |price - next-day mark| for suboptimal trades, 0 otherwise."""
    if mark not in ("open", "close"):
        raise ValidationError("loss mark must be open or close")
    out = labels.copy()
    nxt = [getattr(bars[(s, d)], mark) for s, d in zip(out["symbol"], out["next_day"])]
    out["next_price"] = np.asarray(nxt, dtype=float) if len(out) else np.empty(0)
    out["loss"] = np.where(out["locally_optimal"], 0.0,
                           out["shares"] * (out["price"] - out["next_price"]).abs()) if len(out) else np.empty(0)
    return out


def total_loss(labels_with_loss: pd.DataFrame) -> float:
    # correctly rounded, so the total does not depend on row order
    return math.fsum(labels_with_loss["loss"]) if len(labels_with_loss) else 0.0


def random_baseline(trades: Sequence[TradeRecord], bars: Mapping[tuple[str, date], PriceBar],
                    seed: int) -> list[TradeRecord]:
    """Same symbol, side and shares on a uniformly random day the symbol has a bar,
    at a price uniform between that day's minimum and maximum."""
    days: dict[str, list[date]] = defaultdict(list)
    for s, d in bars:
        days[s].append(d)
    for s in days:
        days[s].sort()
    rng = np.random.default_rng(seed)
    out = []
    for t in trades:
        options = days[t.symbol]
        d = options[int(rng.integers(len(options)))]
        b = bars[(t.symbol, d)]
        out.append(TradeRecord(t.symbol, d, t.side, float(rng.uniform(b.day_min, b.day_max)), t.shares))
    return out


def compare_to_baseline(actual: pd.DataFrame, baseline: pd.DataFrame) -> dict:
    """Suboptimal rates and total losses of actual vs. baseline trades."""
    ra = float((~actual["locally_optimal"]).mean()) if len(actual) else 0.0
    rb = float((~baseline["locally_optimal"]).mean()) if len(baseline) else 0.0
    la, lb = total_loss(actual), total_loss(baseline)
    return {
        "actual_suboptimal_rate": ra,
        "baseline_suboptimal_rate": rb,
        "rate_diff_points": rb - ra,
        "rate_diff_relative": (rb - ra) / ra if ra else None,
        "actual_total_loss": la,
        "baseline_total_loss": lb,
        "loss_diff": lb - la,
    }


class TradeBook:
    """Trading-day activity per symbol, for consecutive-day and dormancy queries."""

    def __init__(self, trades: Iterable[TradeRecord], calendar: TradingCalendar,
                 symbols: Iterable[str] | None = None):
        self.calendar = calendar
        self.traded: dict[str, set[int]] = defaultdict(set)
        self.traded_days: dict[str, set[date]] = defaultdict(set)
        for t in trades:
            if t.day in calendar:
                self.traded[t.symbol].add(calendar.index(t.day))
            self.traded_days[t.symbol].add(t.day)
        self.symbols = sorted(set(symbols) if symbols is not None else set(self.traded))

    def was_traded(self, s: str, i: int) -> bool:
        return i in self.traded.get(s, ())

    def consecutive_days(self, s: str, d: date) -> int:
        """Largest k with a trade of ``s`` on each of the k trading days before ``d``."""
        i = self.calendar.index(d)
        got = self.traded.get(s, set())
        k = 0
        while i - k - 1 >= 0 and (i - k - 1) in got:
            k += 1
        return k

    def k_unobserved(self, k: int, d: date, week: str = "trading") -> set[str]:
        """Symbols without trades in the k weeks before ``d``.

        A week is 5 trading days (``week='trading'``) or 7 calendar days
        (``week='calendar'``). Days whose window reaches before the calendar
        start admit no symbol for k >= 1. Every symbol is 0-unobserved.
        """
        if k < 0:
            raise ValidationError("k must be >= 0")
        if k == 0:
            return set(self.symbols)
        if week == "trading":
            i = self.calendar.index(d)
            lo = i - 5 * k
            if lo < 0:
                return set()
            window = range(lo, i)
            return {s for s in self.symbols if not any(j in self.traded.get(s, ()) for j in window)}
        if week == "calendar":
            start = d - timedelta(days=7 * k)
            if start < self.calendar.days[0]:
                return set()
            return {
                s for s in self.symbols
                if not any(start <= td < d for td in self.traded_days.get(s, ()))
            }
        raise ValidationError(f"unknown week mode {week!r}")


def consecutive_days(trades: Iterable[TradeRecord], s: str, d: date, calendar: TradingCalendar) -> int:
    return TradeBook(trades, calendar).consecutive_days(s, d)


def k_unobserved(trades: Iterable[TradeRecord], k: int, d: date, calendar: TradingCalendar,
                 symbols: Iterable[str], week: str = "trading") -> set[str]:
    return TradeBook(trades, calendar, symbols).k_unobserved(k, d, week)


def trades_frame(trades: Sequence[TradeRecord]) -> pd.DataFrame:
    return pd.DataFrame([(t.symbol, t.day, t.side, t.price, t.shares) for t in trades],
                        columns=["symbol", "day", "side", "price", "shares"])
