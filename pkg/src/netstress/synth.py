"""Seeded synthetic corpora with planted couplings between prices, network and behavior.

Mechanics of :func:`generate_dataset`:

* Insiders sit on desks; every stock is covered by one desk plus a few
  brokers (outsiders). Daily background chatter runs mostly between desk
  mates, so desk mates become each insider's strongest prior partners.
* Each (stock, day) draws a Poisson number of communication events. Three
  latent states shape them:

  - *turtling* ``t = 1 - exp(-kappa * |change| / 0.05)``: more events, more
    closed triads among desk mates, fewer border messages;
  - *cohesion* (Bernoulli, independent of prices): more closed triads and
    more cognitive-category words;
  - *attention* (Bernoulli, independent of prices): more events spread over
    a wider team, and a dormant stock likely starts trading.

* Positive (negative) emotion words become likelier on up (down) days.
* Trading follows a two-state process: streaks continue with a fixed
  probability; dormant stocks start mostly on attention days.

With ``kappa = 0`` the network is independent of prices by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, time, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ValidationError
from .ingest import Dataset, MessageEvent, PriceBar, TradeRecord, TradingCalendar, write_dataset
from .lexicon import Lexicon, demo_lexicon

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FILLER = ["the", "to", "on", "we", "it", "is", "at", "for", "of", "price", "call", "desk", "book", "size",
          "bid", "ask", "print", "order", "fill", "look", "check", "market", "today", "close", "open", "name",
          "team", "model", "risk", "flow", "trade", "deal", "vol", "spread", "note", "update", "ping", "chat",
          "sheet", "plan", "list", "level", "move", "run", "view", "idea", "week", "print", "screen", "data"]
SUFFIXES = ["", "s", "ed", "ing", "y"]
POSITIVE = "posemo"
NEGATIVE = "negemo"
COGNITIVE = "cogmech"


@dataclass
class SynthConfig:
    """Generator parameters. Every field can be set from a flat TOML table."""

    seed: int = 7
    n_insiders: int = 60
    n_outsiders: int = 240
    n_stocks: int = 200
    n_days: int = 500
    n_industries: int = 10
    start: str = "2011-01-03"
    desk_size: int = 6
    brokers_per_stock: int = 4
    # communication
    event_rate: tuple[float, float] = (0.6, 2.4)     # per-stock base events per day
    background_rate: float = 1.5                      # non-mention messages per insider per day
    background_desk_share: float = 0.8
    border_share: float = 0.35
    # latent couplings
    kappa: float = 1.0
    turtle_scale: float = 0.05
    cohesion_prob: float = 0.3
    cohesion_closure: float = 0.6
    attention_prob: float = 0.04
    attention_boost: float = 3.0
    # content
    words_per_message: tuple[int, int] = (5, 12)
    emotion_base: float = 0.08
    lexicon_coupling: float = 0.5
    cognitive_base: float = 0.12
    cohesion_content: float = 0.5
    cognitive_coupling: float = 0.2
    # prices
    volatility: float = 0.012
    shock_prob: float = 0.03
    shock_size: tuple[float, float] = (0.05, 0.12)
    vix_mean: float = 20.0
    # trading
    trade_continue: float = 0.85
    trade_start_attention: float = 0.6
    trade_start_base: float = 0.004
    optimality_bias: float = 0.5
    # planted linear panel (generate_panel): coefficient on |change| per feature at kappa = 1
    panel_coupling: dict = field(default_factory=lambda: {
        "nodes": 2.0, "clustering": 0.3, "border": -0.2, "strength": 0.1})
    panel_noise: float = 0.01

    def __post_init__(self):
        for f in ("event_rate", "words_per_message", "shock_size"):
            setattr(self, f, tuple(getattr(self, f)))
        if self.n_insiders < 1:
            raise ValidationError("n_insiders must be >= 1")
        if self.n_insiders < 3 or self.desk_size < 3 or self.desk_size > self.n_insiders:
            raise ValidationError("need at least 3 insiders per desk")
        if self.n_stocks < 1 or self.n_days < 1:
            raise ValidationError("need at least one stock and one day")
        for name in ("background_rate", "border_share", "kappa", "cohesion_prob", "attention_prob",
                     "attention_boost", "emotion_base", "lexicon_coupling", "cognitive_base",
                     "cohesion_content", "cognitive_coupling", "volatility", "shock_prob",
                     "trade_continue", "trade_start_attention", "trade_start_base", "optimality_bias",
                     "panel_noise"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        if min(self.event_rate) < 0:
            raise ValidationError("event_rate must be nonnegative")

    @classmethod
    def from_toml(cls, path, **overrides) -> "SynthConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        raw = raw.get("synth", raw)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValidationError(f"unknown synth config keys: {', '.join(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


def _symbols(rng: np.random.Generator, n: int, lex: Lexicon) -> list[str]:
    letters = np.array(list("ABCDEFGHIJKLMNOPQRSTUVWXYZ"))
    banned = set(FILLER)
    out: list[str] = []
    seen = set()
    while len(out) < n:
        sym = "".join(rng.choice(letters, size=int(rng.integers(3, 5))))
        low = sym.lower()
        if sym in seen or low in banned or any(c.matches(low) for c in lex.categories):
            continue
        seen.add(sym)
        out.append(sym)
    return sorted(out)


def _category_words(lex: Lexicon, name: str) -> list[str]:
    try:
        cat = lex[name]
    except KeyError:
        return []
    return sorted(cat.literals) + [p + s for p in cat.prefixes for s in SUFFIXES]


def trading_days(start: str, n: int) -> list[date]:
    return [d.date() for d in pd.bdate_range(start=start, periods=n)]


def _prices(cfg: SynthConfig, rng, symbols, days):
    n_s, n_d = len(symbols), len(days)
    change = np.clip(rng.normal(0.0, cfg.volatility, (n_s, n_d)), -0.045, 0.045)
    shock = rng.random((n_s, n_d)) < cfg.shock_prob
    mag = rng.uniform(*cfg.shock_size, (n_s, n_d)) * rng.choice([-1.0, 1.0], (n_s, n_d))
    change = np.where(shock, mag, change)
    gap = rng.normal(0.0, 0.002, (n_s, n_d))
    wick_hi = np.abs(rng.normal(0.0, 0.004, (n_s, n_d)))
    wick_lo = np.abs(rng.normal(0.0, 0.004, (n_s, n_d)))
    level = rng.uniform(10.0, 200.0, n_s)
    bars = {}
    for i, s in enumerate(symbols):
        prev_close = level[i]
        for j, d in enumerate(days):
            o = round(prev_close * (1.0 + gap[i, j]), 4)
            c = round(o * (1.0 + change[i, j]), 4)
            hi = round(max(o, c) * (1.0 + wick_hi[i, j]), 4)
            lo = round(min(o, c) * (1.0 - wick_lo[i, j]), 4)
            bars[(s, d)] = PriceBar(s, d, o, c, hi, lo)
            prev_close = c
    return bars


def _vix(cfg: SynthConfig, rng, days):
    v = cfg.vix_mean
    out = {}
    for d in days:
        v = cfg.vix_mean + 0.95 * (v - cfg.vix_mean) + rng.normal(0.0, 1.0)
        v = max(v, 9.0)
        out[d] = round(v, 4)
    return out


def generate_dataset(cfg: SynthConfig | None = None, lexicon: Lexicon | None = None) -> tuple[Dataset, pd.DataFrame]:
    """Build a corpus in memory; returns the dataset and the planted latent states."""
    cfg = cfg or SynthConfig()
    lex = lexicon or demo_lexicon()
    rng = np.random.default_rng(cfg.seed)

    insiders = [f"i{j:03d}" for j in range(cfg.n_insiders)]
    outsiders = [f"o{j:04d}" for j in range(cfg.n_outsiders)]
    directory = {p: True for p in insiders} | {p: False for p in outsiders}
    symbols = _symbols(rng, cfg.n_stocks, lex)
    days = trading_days(cfg.start, cfg.n_days)
    industry = {s: f"ind{int(rng.integers(cfg.n_industries)):02d}" for s in symbols}

    n_desks = max(1, cfg.n_insiders // cfg.desk_size)
    desks = [insiders[k * cfg.desk_size:(k + 1) * cfg.desk_size] for k in range(n_desks)]
    desks[-1] = desks[-1] + insiders[n_desks * cfg.desk_size:]
    desk_of = {p: k for k, desk in enumerate(desks) for p in desk}
    stock_desk = {s: int(rng.integers(n_desks)) for s in symbols}
    brokers = {s: list(rng.choice(outsiders, size=min(cfg.brokers_per_stock, len(outsiders)), replace=False))
               if outsiders else [] for s in symbols}
    base_rate = {s: float(rng.uniform(*cfg.event_rate)) for s in symbols}

    bars = _prices(cfg, rng, symbols, days)
    vix = _vix(cfg, rng, days)

    pos_words = _category_words(lex, POSITIVE)
    neg_words = _category_words(lex, NEGATIVE)
    cog_words = _category_words(lex, COGNITIVE)
    filler = [w for w in FILLER if not any(c.matches(w) for c in lex.categories)]
    all_people = insiders + outsiders

    messages: list[MessageEvent] = []
    counter = 0

    def emit(d, a, b, tokens, mentions):
        nonlocal counter
        counter += 1
        secs = int(rng.integers(8 * 3600, 18 * 3600))
        ts = datetime.combine(d, time()) + timedelta(seconds=secs)
        messages.append(MessageEvent(f"m{counter:08d}", ts, a, b, tuple(tokens), mentions))

    def words(sym_token, p_pos, p_neg, p_cog):
        n = int(rng.integers(cfg.words_per_message[0], cfg.words_per_message[1] + 1))
        toks = [filler[int(rng.integers(len(filler)))] for _ in range(n)]
        if sym_token:
            toks[int(rng.integers(n))] = sym_token
        for p, pool in ((p_pos, pos_words), (p_neg, neg_words), (p_cog, cog_words)):
            if pool and rng.random() < p:
                toks.append(pool[int(rng.integers(len(pool)))])
        return toks

    truth_rows = []
    traded_prev = {s: False for s in symbols}
    trades: list[TradeRecord] = []
    for j, d in enumerate(days):
        # background chatter builds pairwise history
        for x in insiders:
            for _ in range(int(rng.poisson(cfg.background_rate))):
                desk = desks[desk_of[x]]
                if rng.random() < cfg.background_desk_share and len(desk) > 1:
                    y = desk[int(rng.integers(len(desk)))]
                    while y == x:
                        y = desk[int(rng.integers(len(desk)))]
                else:
                    y = all_people[int(rng.integers(len(all_people)))]
                    if y == x:
                        continue
                emit(d, x, y, words(None, cfg.emotion_base, cfg.emotion_base, cfg.cognitive_base), frozenset())

        for s in symbols:
            bar = bars[(s, d)]
            delta = (bar.close - bar.open) / bar.open
            turtle = 1.0 - math.exp(-cfg.kappa * abs(delta) / cfg.turtle_scale)
            cohesive = bool(rng.random() < cfg.cohesion_prob)
            attention = bool(rng.random() < cfg.attention_prob)
            desk = desks[stock_desk[s]]
            rate = base_rate[s] * (1.0 + 2.0 * turtle) * (cfg.attention_boost if attention else 1.0)
            n_events = int(rng.poisson(rate))
            p_border = cfg.border_share * (1.0 - 0.8 * turtle)
            p_closed = min(0.95, 0.1 + 0.6 * turtle + cfg.cohesion_closure * cohesive)
            p_strong = 0.3 + 0.5 * turtle
            p_pos = cfg.emotion_base + cfg.lexicon_coupling * max(0.0, math.tanh(delta / 0.03))
            p_neg = cfg.emotion_base + cfg.lexicon_coupling * max(0.0, math.tanh(-delta / 0.03))
            p_cog = min(1.0, cfg.cognitive_base + cfg.cohesion_content * cohesive
                        + cfg.cognitive_coupling * (1.0 - math.exp(-abs(delta) / 0.05)))
            tok = s.lower()
            mention = frozenset([s])
            for _ in range(n_events):
                if brokers[s] and rng.random() < p_border:
                    x = desk[int(rng.integers(len(desk)))]
                    y = brokers[s][int(rng.integers(len(brokers[s])))]
                    emit(d, x, y, words(tok, p_pos, p_neg, p_cog), mention)
                elif rng.random() < p_closed:
                    trio = rng.choice(len(desk), size=3, replace=False)
                    a, b, c = (desk[int(k)] for k in trio)
                    for u, v in ((a, b), (b, c), (a, c)):
                        emit(d, u, v, words(tok, p_pos, p_neg, p_cog), mention)
                else:
                    x = desk[int(rng.integers(len(desk)))]
                    if rng.random() < p_strong and not attention:
                        y = desk[int(rng.integers(len(desk)))]
                    else:
                        y = insiders[int(rng.integers(len(insiders)))]
                    if y == x:
                        continue
                    emit(d, x, y, words(tok, p_pos, p_neg, p_cog), mention)

            if traded_prev[s]:
                p_trade = cfg.trade_continue
            else:
                p_trade = cfg.trade_start_attention if attention else cfg.trade_start_base
            traded = bool(rng.random() < p_trade)
            if traded:
                for _ in range(1 + int(rng.poisson(1.0))):
                    side = "buy" if rng.random() < 0.5 else "sell"
                    u = rng.random()
                    if cohesive and rng.random() < cfg.optimality_bias:
                        u *= 0.3
                    price = round(bar.day_min + u * (bar.day_max - bar.day_min), 4)
                    trades.append(TradeRecord(s, d, side, price, 100 * int(rng.integers(1, 51))))
            traded_prev[s] = traded
            truth_rows.append((s, d, delta, turtle, cohesive, attention, traded))

    ds = Dataset(
        messages=tuple(messages),
        directory=directory,
        bars=bars,
        trades=tuple(trades),
        vix=vix,
        industry=industry,
        lexicon=lex,
    )
    truth = pd.DataFrame(truth_rows, columns=["symbol", "day", "change", "turtling", "cohesive", "attention",
                                              "traded"])
    return ds, truth


def generate(cfg: SynthConfig | None, out_dir, lexicon: Lexicon | None = None) -> Dataset:
    """Write a corpus (ingest formats plus ``truth.csv`` and ``synth_config.json``) to ``out_dir``."""
    import json

    cfg = cfg or SynthConfig()
    ds, truth = generate_dataset(cfg, lexicon)
    out = Path(out_dir)
    write_dataset(ds, out)
    t = truth.copy()
    t["day"] = t["day"].map(date.isoformat)
    t["change"] = t["change"].map(repr)
    t["turtling"] = t["turtling"].map(repr)
    for c in ("cohesive", "attention", "traded"):
        t[c] = t[c].astype(int)
    t.to_csv(out / "truth.csv", index=False, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    return ds


# -- planted linear panel ----------------------------------------------------------


@dataclass
class Panel:
    frame: pd.DataFrame          # symbol, day and one column per planted feature
    changes: pd.DataFrame        # symbol, day, change, abs_change
    vix: dict
    calendar: TradingCalendar
    coefficients: dict           # planted |change| coefficient per feature


def generate_panel(cfg: SynthConfig | None = None, n_stocks: int = 100, n_days: int = 102,
                   lag1: float = 0.2, lag2: float = 0.1, vix_coef: float = -0.002) -> Panel:
    """Feature panel following the regression form exactly, with planted coefficients.

    ``f[s,d] = a_s + w_dow + beta * |change| + lag1 * f[s,d-1] + lag2 * f[s,d-2]
    + vix_coef * VIX + noise``, ``beta = kappa * panel_coupling[f]``.
    Two warm-up days per stock lack lags, so ``n_days = 102`` yields 100
    regression rows per stock.
    """
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    days = trading_days(cfg.start, n_days)
    symbols = [f"P{i:04d}" for i in range(n_stocks)]
    vix = _vix(cfg, rng, days)
    change = np.clip(rng.normal(0.0, 0.03, (n_stocks, n_days)), -0.2, 0.2)
    weekday = rng.normal(0.0, 0.05, 7)
    coefs = {f: cfg.kappa * c for f, c in cfg.panel_coupling.items()}
    cols = {}
    for f, beta in coefs.items():
        alpha = rng.normal(0.0, 0.5, n_stocks)
        vals = np.zeros((n_stocks, n_days))
        noise = rng.normal(0.0, cfg.panel_noise, (n_stocks, n_days))
        for j, d in enumerate(days):
            mean = alpha + weekday[d.weekday()] + beta * np.abs(change[:, j]) + vix_coef * vix[d]
            if j >= 2:
                mean = mean + lag1 * vals[:, j - 1] + lag2 * vals[:, j - 2]
            else:
                mean = mean / (1.0 - lag1 - lag2)
            vals[:, j] = mean + noise[:, j]
        cols[f] = vals.ravel()
    frame = pd.DataFrame({"symbol": np.repeat(symbols, n_days), "day": days * n_stocks, **cols})
    changes = pd.DataFrame({"symbol": np.repeat(symbols, n_days), "day": days * n_stocks,
                            "change": change.ravel()})
    changes["abs_change"] = changes["change"].abs()
    return Panel(frame, changes, vix, TradingCalendar(days), coefs)
