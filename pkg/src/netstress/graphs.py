"""Per-stock, per-day communication graphs and their structural features.

For a symbol ``s`` and day ``d`` the internal graph joins every pair of
insiders who exchanged a message mentioning ``s`` on ``d``; the extended
graph adds border edges to outside contacts. Parallel edges collapse.

Metric functions return exact :class:`fractions.Fraction` values (or None
when the defining denominator is empty); the archive stores floats.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import ValidationError

ORIENTATIONS = ("incidence", "either_endpoint")

# archive column -> human description; order is the CSV column order
FEATURES = {
    "nodes": "N: insider node count",
    "edges": "E: internal edge count",
    "clustering": "C: mean local clustering",
    "largest_cc": "L: largest-component node fraction",
    "k90": "K: components needed to cover 90% of nodes",
    "strength": "S: strong-tie incidence fraction",
    "border": "O: border-edge fraction of the extended graph",
    "nodes_rel": "N-bar: nodes relative to the stock's prior mean",
    "edges_nu": "nu(E): edges relative to prior graphs with equal N",
    "clustering_nu": "nu(C): clustering relative to prior graphs with equal N",
    "clustering_eps": "eps(C): clustering relative to prior graphs with equal E",
}
BASE_FEATURES = ["nodes", "edges", "clustering", "largest_cc", "k90", "strength", "border"]


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class StockDayGraph:
    symbol: str
    day: date
    internal_edges: frozenset[tuple[str, str]]
    border_edges: frozenset[tuple[str, str]] = frozenset()
    insiders: frozenset[str] = field(default=frozenset(), compare=False)

    @classmethod
    def from_edges(cls, internal: Iterable[tuple[str, str]], border: Iterable[tuple[str, str]] = (),
                   symbol: str = "", day: date | None = None, insiders: Iterable[str] = ()) -> "StockDayGraph":
        internal = frozenset(_pair(a, b) for a, b in internal)
        border = frozenset(_pair(a, b) for a, b in border)
        for a, b in internal | border:
            if a == b:
                raise ValidationError(f"self-loop on {a}")
        return cls(symbol, day or date.min, internal, border, frozenset(insiders))

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(p for e in self.internal_edges for p in e)

    @property
    def plus_nodes(self) -> frozenset[str]:
        return self.nodes | frozenset(p for e in self.border_edges for p in e)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = defaultdict(set)
        for a, b in self.internal_edges:
            adj[a].add(b)
            adj[b].add(a)
        return dict(adj)


def build_graph(dataset, s: str, d: date) -> StockDayGraph:
    """Internal and border edges from messages mentioning ``s`` on ``d``."""
    directory = dataset.directory
    internal, border = set(), set()
    for m in dataset.mention_index.get((s, d), ()):
        a, b = m.sender, m.receiver
        ia, ib = directory[a], directory[b]
        if ia and ib:
            internal.add(_pair(a, b))
        elif ia or ib:
            border.add(_pair(a, b))
    insiders = {p for e in border for p in e if directory[p]}
    return StockDayGraph(s, d, frozenset(internal), frozenset(border), frozenset(insiders))


# -- structural metrics ------------------------------------------------------


def clustering(g: StockDayGraph, adj: Mapping[str, set[str]] | None = None) -> Fraction | None:
    """Mean local clustering; nodes with degree < 2 contribute 0."""
    adj = g.adjacency() if adj is None else adj
    if not adj:
        return None
    total = Fraction(0)
    for v, nbrs in adj.items():
        k = len(nbrs)
        if k < 2:
            continue
        links = sum(len(adj[u] & nbrs) for u in nbrs) // 2
        if links:
            total += Fraction(2 * links, k * (k - 1))
    return total / len(adj)


def component_sizes(adj: Mapping[str, set[str]]) -> list[int]:
    seen: set[str] = set()
    sizes = []
    for start in adj:
        if start in seen:
            continue
        seen.add(start)
        stack, size = [start], 0
        while stack:
            v = stack.pop()
            size += 1
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        sizes.append(size)
    return sorted(sizes, reverse=True)


def components(g: StockDayGraph, adj: Mapping[str, set[str]] | None = None,
               coverage: Fraction = Fraction(9, 10)) -> tuple[Fraction, int] | None:
    """(largest-component fraction, number of components covering ``coverage`` of nodes)."""
    adj = g.adjacency() if adj is None else adj
    if not adj:
        return None
    sizes = component_sizes(adj)
    n = sum(sizes)
    cum = 0
    for k, size in enumerate(sizes, start=1):
        cum += size
        if cum >= coverage * n:
            return Fraction(sizes[0], n), k
    raise AssertionError("unreachable")  # pragma: no cover


def openness(g: StockDayGraph) -> Fraction | None:
    """Border edges as a fraction of all edges in the extended graph."""
    total = len(g.border_edges) + len(g.internal_edges)
    if total == 0:
        return None
    return Fraction(len(g.border_edges), total)


def _exact_alpha(alpha) -> Fraction:
    a = Fraction(alpha).limit_denominator(10**9) if isinstance(alpha, float) else Fraction(alpha)
    if not 0 < a <= 1:
        raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
    return a


def top_partners(volumes: Mapping[str, int], alpha: Fraction) -> frozenset[str]:
    """First ceil(alpha * m) partners by descending volume, ties by person id."""
    m = len(volumes)
    if m == 0:
        return frozenset()
    keep = math.ceil(alpha * m)
    ranked = sorted(volumes.items(), key=lambda kv: (-kv[1], kv[0]))
    return frozenset(p for p, _ in ranked[:keep])


def tie_strength(g: StockDayGraph, history: "HistoryIndex", alpha=0.1,
                 orientation: str = "incidence") -> Fraction | None:
    """Fraction of internal edges that point to a top-``alpha`` prior partner.

    ``incidence`` judges each edge from both endpoints (denominator 2E);
    ``either_endpoint`` counts an edge once if either endpoint nominates the
    other (denominator E).
    """
    a = _exact_alpha(alpha)
    return _strength(g.internal_edges, lambda x: history.strongest(x, g.day, a), orientation)


def _strength(edges, strongest, orientation: str) -> Fraction | None:
    if orientation not in ORIENTATIONS:
        raise ValidationError(f"unknown tie-strength orientation {orientation!r}")
    if not edges:
        return None
    hits = 0
    for x, y in edges:
        fwd = y in strongest(x)
        bwd = x in strongest(y)
        if orientation == "incidence":
            hits += fwd + bwd
        else:
            hits += fwd or bwd
    return Fraction(hits, 2 * len(edges) if orientation == "incidence" else len(edges))


# -- communication history ---------------------------------------------------


class HistoryIndex:
    """Pairwise message volumes over all days strictly before a query day.

    Every message counts, whether or not it mentions a symbol.
    """

    def __init__(self, messages: Iterable):
        events: dict[str, list[tuple[date, str]]] = defaultdict(list)
        for m in messages:
            d = m.day
            events[m.sender].append((d, m.receiver))
            events[m.receiver].append((d, m.sender))
        self._days: dict[str, list[date]] = {}
        self._partners: dict[str, list[str]] = {}
        for p, ev in events.items():
            ev.sort()
            self._days[p] = [d for d, _ in ev]
            self._partners[p] = [q for _, q in ev]
        self._cache: dict = {}

    def volumes(self, x: str, d: date) -> Counter:
        days = self._days.get(x)
        if not days:
            return Counter()
        return Counter(self._partners[x][: bisect.bisect_left(days, d)])

    def pair_count(self, x: str, y: str, d: date) -> int:
        return self.volumes(x, d).get(y, 0)

    def strongest(self, x: str, d: date, alpha) -> frozenset[str]:
        key = (x, d, alpha)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = top_partners(self.volumes(x, d), _exact_alpha(alpha))
        return hit


class _RollingHistory:
    # sequential daily fold; equivalent to HistoryIndex for the current day
    def __init__(self, alpha: Fraction):
        self.alpha = alpha
        self.counts: dict[str, Counter] = defaultdict(Counter)
        self._top: dict[str, frozenset[str]] = {}

    def strongest(self, x: str) -> frozenset[str]:
        hit = self._top.get(x)
        if hit is None:
            hit = self._top[x] = top_partners(self.counts.get(x, {}), self.alpha)
        return hit

    def advance(self, messages: Iterable) -> None:
        for m in messages:
            self.counts[m.sender][m.receiver] += 1
            self.counts[m.receiver][m.sender] += 1
        self._top.clear()


# -- archive -----------------------------------------------------------------


def graph_features(g: StockDayGraph, strongest, orientation: str = "incidence") -> dict:
    """Base (non-normalized) features of one graph as exact values."""
    adj = g.adjacency()
    comp = components(g, adj)
    return {
        "nodes": len(adj),
        "edges": len(g.internal_edges),
        "clustering": clustering(g, adj),
        "largest_cc": comp[0] if comp else None,
        "k90": comp[1] if comp else None,
        "strength": _strength(g.internal_edges, strongest, orientation),
        "border": openness(g),
    }


def _ratio(value, total: float, count: int):
    if value is None or count == 0 or total == 0:
        return None
    return float(value) / (total / count)


@dataclass
class FeatureArchive:
    """Feature rows keyed by (symbol, day), chronologically ordered."""

    frame: pd.DataFrame
    alpha: float = 0.1
    orientation: str = "incidence"

    def __len__(self) -> int:
        return len(self.frame)

    def filter(self, min_nodes: int = 2) -> "FeatureArchive":
        return FeatureArchive(self.frame[self.frame["nodes"] >= min_nodes].reset_index(drop=True),
                              self.alpha, self.orientation)

    def row(self, s: str, d: date) -> pd.Series:
        f = self.frame
        hit = f[(f["symbol"] == s) & (f["day"] == d)]
        if hit.empty:
            raise KeyError((s, d))
        return hit.iloc[0]

    def normalize(self, s: str, d: date, feature: str, mode: str) -> float | None:
        """Ratio of a feature to its mean over a causal reference set.

        ``by_nodes`` / ``by_edges``: prior graphs (any stock) with the same
        node / edge count. ``by_stock``: node count over this stock's prior
        node counts (``feature`` must be ``nodes``).
        """
        f = self.frame
        if feature not in f.columns or feature not in BASE_FEATURES:
            raise ValidationError(f"unknown feature {feature!r}")
        cur = self.row(s, d)
        prior = f[f["day"] < d]
        if mode == "by_nodes":
            ref = prior.loc[prior["nodes"] == cur["nodes"], feature]
        elif mode == "by_edges":
            ref = prior.loc[prior["edges"] == cur["edges"], feature]
        elif mode == "by_stock":
            if feature != "nodes":
                raise ValidationError("by_stock normalization is defined for nodes only")
            ref = prior.loc[prior["symbol"] == s, "nodes"]
        else:
            raise ValidationError(f"unknown normalization mode {mode!r}")
        ref = ref.dropna()
        value = cur[feature]
        if ref.empty or pd.isna(value) or ref.mean() == 0:
            return None
        return float(value) / float(ref.mean())


def compute_archive(dataset, alpha=0.1, orientation: str = "incidence") -> FeatureArchive:
    """Features and causal normalizations for every (symbol, day) with an internal edge."""
    a = _exact_alpha(alpha)
    if orientation not in ORIENTATIONS:
        raise ValidationError(f"unknown tie-strength orientation {orientation!r}")
    symbols_by_day: dict[date, list[str]] = defaultdict(list)
    for (s, d) in dataset.mention_index:
        symbols_by_day[d].append(s)

    history = _RollingHistory(a)
    # running (sum, count) keyed for the normalizations; updated after each day
    by_n_clust: dict[int, list] = defaultdict(lambda: [0.0, 0])
    by_n_edges: dict[int, list] = defaultdict(lambda: [0.0, 0])
    by_e_clust: dict[int, list] = defaultdict(lambda: [0.0, 0])
    by_stock_nodes: dict[str, list] = defaultdict(lambda: [0.0, 0])

    rows = []
    for d, msgs in dataset.messages_by_day.items():
        today = []
        for s in sorted(symbols_by_day.get(d, ())):
            g = build_graph(dataset, s, d)
            if not g.internal_edges:
                continue
            feats = graph_features(g, history.strongest, orientation)
            n, e, c = feats["nodes"], feats["edges"], feats["clustering"]
            feats["nodes_rel"] = _ratio(n, *by_stock_nodes[s]) if s in by_stock_nodes else None
            feats["edges_nu"] = _ratio(e, *by_n_edges[n]) if n in by_n_edges else None
            feats["clustering_nu"] = _ratio(c, *by_n_clust[n]) if n in by_n_clust else None
            feats["clustering_eps"] = _ratio(c, *by_e_clust[e]) if e in by_e_clust else None
            today.append((s, feats))
        for s, feats in today:
            n, e, c = feats["nodes"], feats["edges"], float(feats["clustering"])
            for acc, key, val in ((by_n_clust, n, c), (by_n_edges, n, e), (by_e_clust, e, c),
                                  (by_stock_nodes, s, n)):
                acc[key][0] += val
                acc[key][1] += 1
            rows.append({"symbol": s, "day": d, **feats})
        history.advance(msgs)

    frame = pd.DataFrame(rows, columns=["symbol", "day", *FEATURES])
    for col in ("clustering", "largest_cc", "strength", "border", "nodes_rel", "edges_nu",
                "clustering_nu", "clustering_eps"):
        frame[col] = frame[col].map(lambda v: np.nan if v is None else float(v)).astype(float)
    for col in ("nodes", "edges", "k90"):
        frame[col] = frame[col].astype(int)
    return FeatureArchive(frame, float(alpha), orientation)


def write_archive(archive: FeatureArchive, path) -> None:
    out = archive.frame.copy()
    out["day"] = out["day"].map(lambda d: d.isoformat())
    out.to_csv(path, index=False, na_rep="", float_format="%.17g")


def read_archive(path, alpha: float = 0.1) -> FeatureArchive:
    frame = pd.read_csv(path)
    missing = {"symbol", "day", *FEATURES} - set(frame.columns)
    if missing:
        raise ValidationError(f"{path}: missing feature columns {sorted(missing)}")
    frame["day"] = pd.to_datetime(frame["day"]).dt.date
    frame["symbol"] = frame["symbol"].astype(str)
    return FeatureArchive(frame[["symbol", "day", *FEATURES]], alpha)
