"""Category lexicons, per-message word percentages and daily conformance.

A lexicon maps category names to patterns. A pattern is either a literal
word (``sad`` matches only ``sad``) or a prefix stem with a trailing
wildcard (``happ*`` matches ``happy``, ``happiness``, ...).
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from .errors import ValidationError


@dataclass(frozen=True)
class Category:
    name: str
    literals: frozenset[str]
    prefixes: tuple[str, ...]

    def matches(self, token: str) -> bool:
        return token in self.literals or (bool(self.prefixes) and token.startswith(self.prefixes))

    def patterns(self) -> list[str]:
        return sorted(self.literals) + sorted(p + "*" for p in self.prefixes)


@dataclass(frozen=True)
class Lexicon:
    categories: tuple[Category, ...]

    def __post_init__(self):
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise ValidationError("lexicon category names must be unique")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.categories]

    def __getitem__(self, name: str) -> Category:
        for c in self.categories:
            if c.name == name:
                return c
        raise KeyError(name)

    def subset(self, names: Iterable[str]) -> "Lexicon":
        return Lexicon(tuple(self[n] for n in names))

    @classmethod
    def from_patterns(cls, entries: Iterable[tuple[str, str]]) -> "Lexicon":
        lits: dict[str, set[str]] = defaultdict(set)
        pres: dict[str, set[str]] = defaultdict(set)
        order: list[str] = []
        for cat, pat in entries:
            if not cat:
                raise ValidationError("empty lexicon category name")
            stem = pat[:-1] if pat.endswith("*") else pat
            if not stem or stem != stem.lower() or "*" in stem:
                raise ValidationError(f"bad lexicon pattern {pat!r} in category {cat!r}")
            if cat not in lits and cat not in pres:
                order.append(cat)
            (pres if pat.endswith("*") else lits)[cat].add(stem)
        return cls(
            tuple(Category(c, frozenset(lits.get(c, ())), tuple(sorted(pres.get(c, ())))) for c in order)
        )


def read_lexicon(path: str | Path) -> Lexicon:
    """Read ``category,pattern`` lines; a leading ``category,pattern`` header is skipped."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row == ["category", "pattern"]):
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{lineno}: expected category,pattern")
            entries.append((row[0].strip(), row[1].strip()))
    if not entries:
        raise ValidationError(f"{path}: empty lexicon")
    return Lexicon.from_patterns(entries)


def write_lexicon(lex: Lexicon, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "pattern"])
        for c in lex.categories:
            for p in c.patterns():
                w.writerow([c.name, p])


def demo_lexicon() -> Lexicon:
    """Small bundled lexicon with affective and cognitive categories."""
    ref = resources.files("netstress") / "data" / "demo_lexicon.csv"
    with resources.as_file(ref) as p:
        return read_lexicon(p)


def message_pct(tokens: Sequence[str], category: Category) -> float | None:
    """Fraction of tokens matching ``category``; None for an empty message."""
    if not tokens:
        return None
    return sum(1 for t in tokens if category.matches(t)) / len(tokens)


class _TokenMatcher:
    # token -> indices of matching categories, memoized (vocabularies are small)
    def __init__(self, lex: Lexicon):
        self.cats = lex.categories
        self.cache: dict[str, tuple[int, ...]] = {}

    def __call__(self, token: str) -> tuple[int, ...]:
        hit = self.cache.get(token)
        if hit is None:
            hit = tuple(i for i, c in enumerate(self.cats) if c.matches(token))
            self.cache[token] = hit
        return hit


COLUMNS = ["symbol", "day", "category", "msg_frac", "word_pct", "baseline", "conforms", "n_messages"]


def conformance(dataset, lexicon: Lexicon | None = None, insiders_only: bool = True) -> pd.DataFrame:
    """Daily category rates per stock and whether each day conforms.

    For every (symbol, day) with at least one message mentioning the symbol,
    and every category, reports

    * ``msg_frac``: fraction of those messages containing a category word,
    * ``word_pct``: mean over those messages of the per-message word fraction,
    * ``baseline``: the symbol's message fraction over the whole corpus,
    * ``conforms``: ``msg_frac > baseline`` (strict).

    With ``insiders_only`` (default) only insider-to-insider messages count.
    """
    lex = lexicon if lexicon is not None else dataset.lexicon
    if lex is None or not lex.categories:
        raise ValidationError("empty lexicon")
    match = _TokenMatcher(lex)
    ncat = len(lex.categories)
    directory = dataset.directory

    # (symbol, day) -> [n_msgs, hits per category, summed word pct per category, n_nonempty]
    acc: dict = {}
    for (sym, day), msgs in dataset.mention_index.items():
        n = 0
        n_nonempty = 0
        hits = [0] * ncat
        pct = [0.0] * ncat
        for m in msgs:
            if insiders_only and not (directory[m.sender] and directory[m.receiver]):
                continue
            n += 1
            if not m.tokens:
                continue
            n_nonempty += 1
            counts = [0] * ncat
            for t in m.tokens:
                for i in match(t):
                    counts[i] += 1
            inv = 1.0 / len(m.tokens)
            for i, c in enumerate(counts):
                if c:
                    hits[i] += 1
                    pct[i] += c * inv
        if n:
            acc[(sym, day)] = (n, hits, pct, n_nonempty)

    tot_n: dict[str, int] = defaultdict(int)
    tot_hits: dict[str, list[int]] = defaultdict(lambda: [0] * ncat)
    for (sym, _), (n, hits, _, _) in acc.items():
        tot_n[sym] += n
        th = tot_hits[sym]
        for i, h in enumerate(hits):
            th[i] += h

    rows = []
    for (sym, day) in sorted(acc, key=lambda k: (k[1], k[0])):
        n, hits, pct, n_nonempty = acc[(sym, day)]
        for i, cat in enumerate(lex.categories):
            th, tn = tot_hits[sym][i], tot_n[sym]
            # integer cross-multiplication keeps the strict comparison exact
            conforms = hits[i] * tn > th * n
            rows.append(
                (sym, day, cat.name, hits[i] / n, pct[i] / n_nonempty if n_nonempty else None, th / tn, conforms, n)
            )
    return pd.DataFrame(rows, columns=COLUMNS)


def word_pct_curves(scores: pd.DataFrame, changes: pd.DataFrame, grid) -> pd.DataFrame:
    """Mean per-message word percentage of each category against price-change thresholds."""
    from .shocks import aggregation_curve

    parts = []
    for cat, sub in scores.groupby("category", sort=False):
        c = aggregation_curve(sub.rename(columns={"word_pct": "value"}), changes, "value", grid)
        c.insert(0, "category", cat)
        parts.append(c)
    return pd.concat(parts, ignore_index=True)
