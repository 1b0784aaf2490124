"""Flat-file datasets: parsing, validation, indexing and serialization.

A dataset directory holds ``messages.csv``, ``prices.csv`` and ``directory.csv``
and optionally ``trades.csv``, ``vix.csv``, ``industry.csv`` and
``lexicon.csv``. Everything is validated on load; the resulting
:class:`Dataset` is immutable and safe to share between readers.
"""

from __future__ import annotations

import bisect
import csv
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ValidationError
from .lexicon import Lexicon, read_lexicon, write_lexicon

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

FILES = {
    "messages": "messages.csv",
    "prices": "prices.csv",
    "trades": "trades.csv",
    "vix": "vix.csv",
    "industry": "industry.csv",
    "directory": "directory.csv",
    "lexicon": "lexicon.csv",
}

HEADERS = {
    "messages": ["msg_id", "timestamp", "sender", "receiver", "tokens", "mentions"],
    "prices": ["symbol", "day", "open", "close", "max", "min"],
    "trades": ["symbol", "day", "side", "price", "shares"],
    "vix": ["day", "value"],
    "industry": ["symbol", "industry"],
    "directory": ["person_id", "insider"],
}


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase and split on any non-alphanumeric character."""
    return tuple(t for t in _TOKEN_SPLIT.split(text.lower()) if t)


@dataclass(frozen=True)
class MessageEvent:
    msg_id: str
    timestamp: datetime
    sender: str
    receiver: str
    tokens: tuple[str, ...]
    mentions: frozenset[str]

    @property
    def day(self) -> date:
        return self.timestamp.date()


@dataclass(frozen=True)
class PriceBar:
    symbol: str
    day: date
    open: float
    close: float
    day_max: float
    day_min: float


@dataclass(frozen=True)
class TradeRecord:
    symbol: str
    day: date
    side: str
    price: float
    shares: int


class TradingCalendar:
    """Ordered trading days; all "previous day" arithmetic goes through here."""

    def __init__(self, days: Iterable[date]):
        self.days: list[date] = sorted(set(days))
        if not self.days:
            raise ValidationError("empty trading calendar")
        self._index = {d: i for i, d in enumerate(self.days)}

    def __len__(self) -> int:
        return len(self.days)

    def __iter__(self):
        return iter(self.days)

    def __contains__(self, d) -> bool:
        return d in self._index

    def index(self, d: date) -> int:
        return self._index[d]

    def shift(self, d: date, k: int) -> date | None:
        """Trading day ``k`` steps after ``d`` (negative for before), or None."""
        i = self._index.get(d)
        if i is not None:
            j = i + k
        else:
            # off-calendar day sits between days[pos - 1] and days[pos]
            pos = bisect.bisect_left(self.days, d)
            if k == 0:
                return None
            j = pos + k if k < 0 else pos + k - 1
        if 0 <= j < len(self.days):
            return self.days[j]
        return None

    def predecessor(self, d: date) -> date | None:
        return self.shift(d, -1)

    def successor(self, d: date) -> date | None:
        return self.shift(d, 1)


@dataclass(frozen=True, eq=True)
class Dataset:
    messages: tuple[MessageEvent, ...]
    directory: Mapping[str, bool]
    bars: Mapping[tuple[str, date], PriceBar]
    trades: tuple[TradeRecord, ...] = ()
    vix: Mapping[date, float] = field(default_factory=dict)
    industry: Mapping[str, str] = field(default_factory=dict)
    lexicon: Lexicon | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def is_insider(self, person: str) -> bool:
        return self.directory[person]

    @cached_property
    def calendar(self) -> TradingCalendar:
        return trading_calendar(self)

    @cached_property
    def symbols(self) -> list[str]:
        return sorted({s for s, _ in self.bars})

    @cached_property
    def messages_by_day(self) -> dict[date, list[MessageEvent]]:
        out: dict[date, list[MessageEvent]] = defaultdict(list)
        for m in self.messages:
            out[m.day].append(m)
        return dict(sorted(out.items()))

    @cached_property
    def mention_index(self) -> dict[tuple[str, date], list[MessageEvent]]:
        """(symbol, day) -> messages mentioning the symbol that day."""
        out: dict[tuple[str, date], list[MessageEvent]] = defaultdict(list)
        for m in self.messages:
            d = m.day
            for s in m.mentions:
                out[(s, d)].append(m)
        return dict(out)

    @cached_property
    def trades_by_key(self) -> dict[tuple[str, date], list[TradeRecord]]:
        out: dict[tuple[str, date], list[TradeRecord]] = defaultdict(list)
        for t in self.trades:
            out[(t.symbol, t.day)].append(t)
        return dict(out)

    def replace(self, **changes) -> "Dataset":
        """Copy with some fields replaced (indexes are rebuilt lazily)."""
        fields = {
            "messages": self.messages,
            "directory": self.directory,
            "bars": self.bars,
            "trades": self.trades,
            "vix": self.vix,
            "industry": self.industry,
            "lexicon": self.lexicon,
            "warnings": self.warnings,
        }
        fields.update(changes)
        return Dataset(**fields)


def trading_calendar(dataset: Dataset) -> TradingCalendar:
    return TradingCalendar(d for _, d in dataset.bars)


# -- parsing -----------------------------------------------------------------


def _rows(path: Path, kind: str):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADERS[kind]:
            raise ValidationError(
                f"{path}:1: expected header {','.join(HEADERS[kind])}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADERS[kind]):
                raise ValidationError(
                    f"{path}:{lineno}: expected {len(HEADERS[kind])} fields, got {len(row)}"
                )
            yield lineno, row


def _parse(path: Path, lineno: int, fn, value: str, what: str):
    try:
        return fn(value)
    except ValueError as exc:
        raise ValidationError(f"{path}:{lineno}: bad {what} {value!r} ({exc})") from None


def _positive_int(v: str) -> int:
    n = int(v)
    if n <= 0:
        raise ValueError("must be positive")
    return n


def _bool01(v: str) -> bool:
    if v not in ("0", "1"):
        raise ValueError("expected 0 or 1")
    return v == "1"


def read_directory(path: Path) -> dict[str, bool]:
    out: dict[str, bool] = {}
    dupes = []
    for lineno, (pid, flag) in _rows(path, "directory"):
        if pid in out:
            dupes.append(pid)
        out[pid] = _parse(path, lineno, _bool01, flag, "insider flag")
    if dupes:
        raise ValidationError(f"{path}: duplicate person_id: {', '.join(sorted(set(dupes)))}")
    if not any(out.values()):
        raise ValidationError(f"{path}: directory lists no insiders")
    return out


def read_messages(path: Path) -> list[MessageEvent]:
    out = []
    for lineno, (mid, ts, snd, rcv, toks, ments) in _rows(path, "messages"):
        out.append(
            MessageEvent(
                msg_id=mid,
                timestamp=_parse(path, lineno, datetime.fromisoformat, ts, "timestamp"),
                sender=snd,
                receiver=rcv,
                tokens=tuple(toks.split()),
                mentions=frozenset(ments.split()),
            )
        )
    return out


def read_prices(path: Path) -> dict[tuple[str, date], PriceBar]:
    out = {}
    for lineno, (sym, day, o, c, hi, lo) in _rows(path, "prices"):
        d = _parse(path, lineno, date.fromisoformat, day, "day")
        vals = [_parse(path, lineno, float, v, "price") for v in (o, c, hi, lo)]
        key = (sym, d)
        if key in out:
            raise ValidationError(f"{path}:{lineno}: duplicate bar for {sym} {day}")
        out[key] = PriceBar(sym, d, *vals)
    return out


def read_trades(path: Path) -> list[TradeRecord]:
    out = []
    for lineno, (sym, day, side, price, shares) in _rows(path, "trades"):
        if side not in ("buy", "sell"):
            raise ValidationError(f"{path}:{lineno}: side must be buy|sell, got {side!r}")
        out.append(
            TradeRecord(
                symbol=sym,
                day=_parse(path, lineno, date.fromisoformat, day, "day"),
                side=side,
                price=_parse(path, lineno, float, price, "price"),
                shares=_parse(path, lineno, _positive_int, shares, "shares"),
            )
        )
    return out


def read_vix(path: Path) -> dict[date, float]:
    out = {}
    for lineno, (day, value) in _rows(path, "vix"):
        out[_parse(path, lineno, date.fromisoformat, day, "day")] = _parse(
            path, lineno, float, value, "value"
        )
    return out


def read_industry(path: Path) -> dict[str, str]:
    return {sym: ind for _, (sym, ind) in _rows(path, "industry")}


def _fail(reason: str, offenders: list) -> None:
    if offenders:
        shown = ", ".join(str(o) for o in offenders[:20])
        more = f" (+{len(offenders) - 20} more)" if len(offenders) > 20 else ""
        raise ValidationError(f"{reason}: {shown}{more}")


def validate(ds: Dataset) -> list[str]:
    """Check every cross-file invariant; raise on violations, return warnings."""
    warnings = []

    unknown = sorted({p for m in ds.messages for p in (m.sender, m.receiver)} - set(ds.directory))
    _fail("person not in directory", unknown)
    _fail("sender equals receiver", [m.msg_id for m in ds.messages if m.sender == m.receiver])
    _fail(
        "no insider endpoint",
        [m.msg_id for m in ds.messages if not (ds.directory[m.sender] or ds.directory[m.receiver])],
    )
    ids = [m.msg_id for m in ds.messages]
    if len(set(ids)) != len(ids):
        seen, dup = set(), []
        for i in ids:
            if i in seen:
                dup.append(i)
            seen.add(i)
        _fail("duplicate msg_id", dup)

    _fail(
        "price-bar ordering violated",
        [
            f"{b.symbol} {b.day}"
            for b in ds.bars.values()
            if not (b.open > 0 and b.day_min <= min(b.open, b.close) <= max(b.open, b.close) <= b.day_max)
        ],
    )

    _fail("trade price must be positive", [f"{t.symbol} {t.day}" for t in ds.trades if t.price <= 0])
    _fail(
        "trade without price bar",
        [f"{t.symbol} {t.day}" for t in ds.trades if (t.symbol, t.day) not in ds.bars],
    )

    if ds.vix:
        _fail("negative volatility index", [str(d) for d, v in ds.vix.items() if v < 0])
        cal = set(d for _, d in ds.bars)
        msg_days = {m.day for m in ds.messages} & cal
        _fail("volatility index missing trading day", sorted(msg_days - set(ds.vix)))

    if ds.industry:
        _fail("symbol missing from industry map", sorted(set(s for s, _ in ds.bars) - set(ds.industry)))

    universe = {s for s, _ in ds.bars}
    stray = sorted({s for m in ds.messages for s in m.mentions} - universe)
    if stray:
        warnings.append("mentioned symbols without price bars: " + " ".join(stray))
    return warnings


def parse_dataset(path: str | Path, lexicon_path: str | Path | None = None) -> Dataset:
    """Load and validate a dataset directory."""
    root = Path(path)
    for kind in ("messages", "prices", "directory"):
        if not (root / FILES[kind]).exists():
            raise ValidationError(f"missing required file {root / FILES[kind]}")

    def opt(kind, reader, default):
        p = root / FILES[kind]
        return reader(p) if p.exists() else default

    if lexicon_path is not None:
        lex = read_lexicon(lexicon_path)
    else:
        lex = opt("lexicon", read_lexicon, None)
    ds = Dataset(
        messages=tuple(read_messages(root / FILES["messages"])),
        directory=read_directory(root / FILES["directory"]),
        bars=read_prices(root / FILES["prices"]),
        trades=tuple(opt("trades", read_trades, [])),
        vix=opt("vix", read_vix, {}),
        industry=opt("industry", read_industry, {}),
        lexicon=lex,
    )
    warnings = validate(ds)
    return ds.replace(warnings=tuple(warnings))


# -- serialization -----------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def write_dataset(ds: Dataset, path: str | Path) -> None:
    """Serialize ``ds`` into a dataset directory readable by :func:`parse_dataset`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    def dump(kind, rows):
        with open(root / FILES[kind], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADERS[kind])
            w.writerows(rows)

    dump(
        "messages",
        (
            (m.msg_id, m.timestamp.isoformat(), m.sender, m.receiver, " ".join(m.tokens), " ".join(sorted(m.mentions)))
            for m in ds.messages
        ),
    )
    dump(
        "prices",
        (
            (b.symbol, b.day.isoformat(), _num(b.open), _num(b.close), _num(b.day_max), _num(b.day_min))
            for b in sorted(ds.bars.values(), key=lambda b: (b.day, b.symbol))
        ),
    )
    dump("directory", ((p, int(ins)) for p, ins in sorted(ds.directory.items())))
    if ds.trades:
        dump("trades", ((t.symbol, t.day.isoformat(), t.side, _num(t.price), t.shares) for t in ds.trades))
    if ds.vix:
        dump("vix", ((d.isoformat(), _num(v)) for d, v in sorted(ds.vix.items())))
    if ds.industry:
        dump("industry", sorted(ds.industry.items()))
    if ds.lexicon is not None:
        write_lexicon(ds.lexicon, root / FILES["lexicon"])


def tag_mentions(messages: Iterable[MessageEvent], symbols: Iterable[str]) -> list[MessageEvent]:
    """Fill ``mentions`` by exact, case-insensitive token match against ``symbols``."""
    lookup = {s.lower(): s for s in symbols}
    out = []
    for m in messages:
        found = frozenset(lookup[t] for t in m.tokens if t in lookup)
        out.append(MessageEvent(m.msg_id, m.timestamp, m.sender, m.receiver, m.tokens, found))
    return out
