"""Small hand-built datasets for unit tests."""

from __future__ import annotations

from datetime import date, datetime, timedelta

from netstress.ingest import Dataset, MessageEvent, PriceBar, TradeRecord, tokenize

D0 = date(2012, 3, 5)  # a Monday


def day(i: int) -> date:
    """i-th weekday from D0."""
    d = D0
    n = 0
    while n < i:
        d += timedelta(days=1)
        if d.weekday() < 5:
            n += 1
    return d


def msg(i, a, b, d, text="", mentions=(), hour=10):
    return MessageEvent(f"m{i:05d}", datetime.combine(d, datetime.min.time()).replace(hour=hour),
                        a, b, tokenize(text), frozenset(mentions))


def bar(s, d, o=100.0, c=100.0, hi=None, lo=None):
    hi = max(o, c) if hi is None else hi
    lo = min(o, c) if lo is None else lo
    return PriceBar(s, d, o, c, hi, lo)


def dataset(messages=(), insiders=(), outsiders=(), bars=(), trades=(), vix=None, industry=None, lexicon=None):
    directory = {p: True for p in insiders} | {p: False for p in outsiders}
    return Dataset(
        messages=tuple(messages),
        directory=directory,
        bars={(b.symbol, b.day): b for b in bars},
        trades=tuple(trades),
        vix=vix or {},
        industry=industry or {},
        lexicon=lexicon,
    )


def flat_bars(symbols, n_days, price=100.0):
    return [bar(s, day(i), price, price) for s in symbols for i in range(n_days)]


__all__ = ["D0", "day", "msg", "bar", "dataset", "flat_bars", "TradeRecord"]
