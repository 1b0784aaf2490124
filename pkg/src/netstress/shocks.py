"""Daily price changes, x-shocks, price-conditioned curves and shock response."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .errors import ValidationError
from .ingest import PriceBar, TradingCalendar

Z95 = 1.96


@dataclass(frozen=True)
class ShockEvent:
    symbol: str
    day: date
    x: float
    change: float


def price_change(bars: Mapping[tuple[str, date], PriceBar], s: str, d: date) -> float:
    """Proportional open-to-close change (close - open) / open."""
    try:
        bar = bars[(s, d)]
    except KeyError:
        raise ValidationError(f"no price bar for {s} on {d}") from None
    return (bar.close - bar.open) / bar.open


def price_changes(bars: Mapping[tuple[str, date], PriceBar]) -> pd.DataFrame:
    """Frame of symbol, day, change, abs_change for every bar."""
    rows = [(b.symbol, b.day, (b.close - b.open) / b.open) for b in bars.values()]
    out = pd.DataFrame(rows, columns=["symbol", "day", "change"])
    out["abs_change"] = out["change"].abs()
    return out.sort_values(["day", "symbol"], kind="mergesort").reset_index(drop=True)


def detect_shocks(bars: Mapping[tuple[str, date], PriceBar], x: float,
                  calendar: TradingCalendar | None = None) -> list[ShockEvent]:
    """All (s, d) with |change| > x after three trading days with |change| <= x.

    Days without three preceding trading days, or where the stock lacks a bar
    on any of them, are ineligible.
    """
    if x <= 0:
        raise ValidationError("shock threshold must be positive")
    cal = calendar or TradingCalendar(d for _, d in bars)
    by_symbol: dict[str, dict[int, float]] = {}
    for b in bars.values():
        by_symbol.setdefault(b.symbol, {})[cal.index(b.day)] = abs((b.close - b.open) / b.open)
    out = []
    for s in sorted(by_symbol):
        series = by_symbol[s]
        for i in sorted(series):
            if i < 3 or series[i] <= x:
                continue
            prior = [series.get(i - j) for j in (1, 2, 3)]
            if all(p is not None and p <= x for p in prior):
                d = cal.days[i]
                b = bars[(s, d)]
                out.append(ShockEvent(s, d, x, (b.close - b.open) / b.open))
    out.sort(key=lambda e: (e.day, e.symbol))
    return out


def mean_ci(values) -> tuple[float | None, float | None, float | None, int]:
    """(mean, lower, upper, n) with a normal 95% interval; bounds None when n < 2."""
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    n = len(v)
    if n == 0:
        return None, None, None, 0
    m = float(v.mean())
    if n < 2:
        return m, None, None, 1
    half = Z95 * float(v.std(ddof=1)) / math.sqrt(n)
    return m, m - half, m + half, n


def parse_grid(spec: str) -> list[float]:
    """``lo:hi:step`` (inclusive) or a comma list; 0 is always included."""
    if ":" in spec:
        lo, hi, step = (float(p) for p in spec.split(":"))
        if step <= 0:
            raise ValidationError("grid step must be positive")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        pts = [lo + i * step for i in range(n)]
    else:
        pts = [float(p) for p in spec.split(",") if p.strip()]
    pts = sorted({round(p, 10) for p in pts} | {0.0})
    return pts


def _join(frame: pd.DataFrame, changes: pd.DataFrame, feature: str) -> pd.DataFrame:
    if feature not in frame.columns:
        raise ValidationError(f"unknown feature {feature!r}")
    cols = ["symbol", "day", feature]
    return frame[cols].merge(changes[["symbol", "day", "change"]], on=["symbol", "day"], how="inner")


def aggregation_curve(frame: pd.DataFrame, changes: pd.DataFrame, feature: str,
                      grid: Sequence[float]) -> pd.DataFrame:
    """Mean of ``feature`` over rows whose change is at least as extreme as each grid point.

    For g > 0 the set is {change >= g}; for g < 0, {change <= g}; at 0, all rows.
    """
    if 0.0 not in [float(g) for g in grid]:
        raise ValidationError("grid must include 0")
    j = _join(frame, changes, feature).dropna(subset=[feature])
    ch = j["change"].to_numpy()
    vals = j[feature].to_numpy(dtype=float)
    rows = []
    for g in grid:
        if g > 0:
            sel = vals[ch >= g]
        elif g < 0:
            sel = vals[ch <= g]
        else:
            sel = vals
        m, lo, hi, n = mean_ci(sel)
        rows.append((float(g), m, lo, hi, n))
    return pd.DataFrame(rows, columns=["delta", "mean", "lo", "hi", "n"])


@dataclass
class ShockResponse:
    feature: str
    band: float
    offsets: pd.DataFrame          # offset, mean, lo, hi, n
    recovery_day: int | None
    grand_mean: float
    sigma: float
    shock: tuple                   # (mean, lo, hi, n) on shock days
    non_shock: tuple               # (mean, lo, hi, n) on all other days
    welch_p: float | None
    n_all: int = 0

    def to_frame(self) -> pd.DataFrame:
        out = self.offsets.copy()
        out.insert(0, "kind", "offset")
        extra = pd.DataFrame(
            [
                ("shock_day", None, *self.shock),
                ("non_shock_day", None, *self.non_shock),
                ("grand", None, self.grand_mean, None, None, self.n_all),
            ],
            columns=["kind", "offset", "mean", "lo", "hi", "n"],
        )
        out = pd.concat([out, extra], ignore_index=True)
        out["feature"] = self.feature
        out["band"] = self.band
        out["recovery_day"] = self.recovery_day
        out["welch_p"] = self.welch_p
        return out


def shock_response(frame: pd.DataFrame, shocks: Sequence[ShockEvent], feature: str,
                   calendar: TradingCalendar, horizon: int = 7, band: float = 0.25) -> ShockResponse:
    """Feature means on shock days and the ``horizon`` trading days after.

    The recovery day is the first offset t >= 1 whose cohort mean lies within
    ``band`` standard deviations (of the feature over all rows) of the grand mean.
    """
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    if not shocks:
        raise ValidationError("no shocks found")
    if feature not in frame.columns:
        raise ValidationError(f"unknown feature {feature!r}")
    values = {(s, d): v for s, d, v in zip(frame["symbol"], frame["day"], frame[feature]) if not pd.isna(v)}
    allv = np.fromiter(values.values(), dtype=float)
    grand = float(allv.mean())
    sigma = float(allv.std(ddof=1)) if len(allv) > 1 else 0.0

    rows = []
    recovery = None
    for t in range(horizon + 1):
        cohort = []
        for e in shocks:
            d = calendar.shift(e.day, t) if t else e.day
            if d is not None and (e.symbol, d) in values:
                cohort.append(values[(e.symbol, d)])
        m, lo, hi, n = mean_ci(cohort)
        rows.append((t, m, lo, hi, n))
        if recovery is None and t >= 1 and m is not None and abs(m - grand) <= band * sigma:
            recovery = t

    keys = {(e.symbol, e.day) for e in shocks}
    on = [v for k, v in values.items() if k in keys]
    off = [v for k, v in values.items() if k not in keys]
    p = None
    if len(on) > 1 and len(off) > 1 and (np.std(on) > 0 or np.std(off) > 0):
        p = float(stats.ttest_ind(on, off, equal_var=False).pvalue)
    return ShockResponse(
        feature=feature,
        band=band,
        offsets=pd.DataFrame(rows, columns=["offset", "mean", "lo", "hi", "n"]),
        recovery_day=recovery,
        grand_mean=grand,
        sigma=sigma,
        shock=mean_ci(on),
        non_shock=mean_ci(off),
        welch_p=p,
        n_all=len(allv),
    )


def shocks_frame(shocks: Sequence[ShockEvent]) -> pd.DataFrame:
    return pd.DataFrame(
        [(e.symbol, e.day, e.change, abs(e.change), e.x) for e in shocks],
        columns=["symbol", "day", "change", "abs_change", "x"],
    )
