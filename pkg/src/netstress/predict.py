"""Time-binned, class-balanced classification tasks with an IRLS logistic model.

Three tasks share one harness:

* ``conformance``: does (s, d) use a lexicon category above the stock's rate?
* ``optimality``: is a trade preceded by >= k consecutive trading days locally optimal?
* ``sudden``: is a stock untraded for k weeks traded on d?

Feature columns are grouped into ``network``, ``price`` and ``history``
blocks; a feature set is a ``+``-joined combination of block names.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .errors import ValidationError
from .ingest import TradingCalendar

NETWORK_FEATURES = ["nodes_rel", "edges_nu", "clustering", "clustering_nu", "clustering_eps",
                    "strength", "border", "largest_cc", "k90"]
PRICE_FEATURES = ["change", "abs_change"]
N_LAGS = 7
HISTORY_DAYS = 7
BLOCKS = ("network", "price", "history")
TASKS = ("conformance", "optimality", "sudden")


# -- logistic regression -------------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    iterations: int
    objective: list[float]
    converged: bool

    @property
    def final_loglik(self) -> float:
        return self.objective[-1]

    def decision(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        return Z @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision(X)))

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) >= 0).astype(int)


def _objective(Z, y, w, b, lam):
    z = Z @ w + b
    ll = float(np.sum(y * z - np.logaddexp(0.0, z))) / len(y)
    return ll - 0.5 * lam * float(w @ w)


def fit_logistic(X, y, lam: float = 1e-3, max_iter: int = 100, tol: float = 1e-8) -> LogisticModel:
    """L2-penalized logistic regression by Newton / IRLS with step halving.

    Maximizes mean log-likelihood - lam/2 * ||w||^2 (intercept unpenalized)
    on features standardized with the training data's own mean and std.
    Stops when the relative objective change falls below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) < 2:
        raise ValidationError("need at least one row of each class")
    n, k = X.shape
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale

    w = np.zeros(k)
    b = 0.0
    obj = _objective(Z, y, w, b, lam)
    history = [obj]
    converged = False
    it = 0
    A = np.hstack([Z, np.ones((n, 1))])
    penalty = np.full(k + 1, lam)
    penalty[-1] = 1e-12
    for it in range(1, max_iter + 1):
        p = 1.0 / (1.0 + np.exp(-(Z @ w + b)))
        grad = A.T @ (y - p) / n - penalty * np.append(w, 0.0)
        s = p * (1.0 - p)
        H = (A * s[:, None]).T @ A / n + np.diag(penalty)
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            w_new, b_new = w + t * step[:-1], b + t * step[-1]
            new = _objective(Z, y, w_new, b_new, lam)
            if new >= obj or t < 1e-10:
                break
            t *= 0.5
        if new < obj:
            break
        change = abs(new - obj) / max(abs(obj), 1e-300)
        w, b, obj = w_new, b_new, new
        history.append(obj)
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"logistic regression did not converge in {max_iter} iterations", RuntimeWarning)
    return LogisticModel(w, b, mean, scale, it, history, converged)


# -- feature panel --------------------------------------------------------------


class FeaturePanel:
    """Dense (symbol x trading day) arrays of base features, NaN where undefined."""

    def __init__(self, symbols: Sequence[str], calendar: TradingCalendar):
        self.symbols = list(symbols)
        self.calendar = calendar
        self.sym_index = {s: i for i, s in enumerate(self.symbols)}
        self.arrays: dict[str, np.ndarray] = {}

    @property
    def shape(self):
        return len(self.symbols), len(self.calendar)

    def _locate(self, frame):
        si = frame["symbol"].map(self.sym_index)
        di = frame["day"].map(lambda d: self.calendar._index.get(d))
        ok = si.notna() & di.notna()
        return si[ok].astype(int).to_numpy(), di[ok].astype(int).to_numpy(), ok.to_numpy()

    def add_frame(self, frame: pd.DataFrame, columns: Sequence[str]) -> None:
        si, di, ok = self._locate(frame)
        for c in columns:
            arr = np.full(self.shape, np.nan)
            arr[si, di] = frame[c].to_numpy(dtype=float)[ok]
            self.arrays[c] = arr

    def lagged(self, name: str, lag: int) -> np.ndarray:
        arr = self.arrays[name]
        if lag == 0:
            return arr
        out = np.full_like(arr, np.nan)
        out[:, lag:] = arr[:, :-lag]
        return out


def build_panel(archive_frame: pd.DataFrame, changes: pd.DataFrame, calendar: TradingCalendar,
                symbols: Sequence[str], traded: dict[str, set[int]] | None = None) -> FeaturePanel:
    panel = FeaturePanel(symbols, calendar)
    panel.add_frame(archive_frame, NETWORK_FEATURES)
    panel.add_frame(changes, PRICE_FEATURES)
    t = np.zeros(panel.shape)
    for s, days in (traded or {}).items():
        if s in panel.sym_index:
            t[panel.sym_index[s], sorted(days)] = 1.0
    panel.arrays["traded"] = t
    return panel


@dataclass
class TaskData:
    """Rows of one task instance: keys, labels and raw (un-imputed) feature blocks."""

    task: str
    group: str
    keys: pd.DataFrame                 # symbol, day, day_index
    labels: np.ndarray
    blocks: dict[str, pd.DataFrame] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    def raw(self, feature_set: str) -> pd.DataFrame:
        names = parse_feature_set(feature_set)
        for b in names:
            if b not in self.blocks:
                raise ValidationError(f"feature block {b!r} unavailable for task {self.task}")
        return pd.concat([self.blocks[b] for b in names], axis=1)

    def matrix(self, feature_set: str, ref=None, raw: pd.DataFrame | None = None) -> tuple[np.ndarray, list[str]]:
        """Imputed design for ``feature_set`` with deduplicated missingness indicators.

        Which indicators exist, and which are duplicates, is decided on the
        ``ref`` rows only (boolean mask or indices; default all rows), so a
        training split never sees the missingness pattern of later rows.
        """
        if raw is None:
            raw = self.raw(feature_set)
        vals = raw.to_numpy(dtype=float)
        miss = np.isnan(vals)
        ref_miss = miss if ref is None else miss[ref]
        cols = list(raw.columns)
        extra, extra_names, seen = [], [], set()
        for j in np.flatnonzero(ref_miss.any(axis=0)):
            sig = ref_miss[:, j].tobytes()
            if sig in seen:
                continue
            seen.add(sig)
            extra.append(miss[:, j].astype(float))
            extra_names.append(cols[j] + "_missing")
        X = np.where(miss, 0.0, vals)
        if extra:
            X = np.hstack([X, np.column_stack(extra)])
        return X, cols + extra_names


def parse_feature_set(feature_set: str) -> list[str]:
    names = [p.strip() for p in feature_set.split("+") if p.strip()]
    bad = [p for p in names if p not in BLOCKS]
    if not names or bad:
        raise ValidationError(f"unknown feature set {feature_set!r}; blocks are {', '.join(BLOCKS)}")
    return names


def _gather(panel: FeaturePanel, names: Sequence[str], si: np.ndarray, di: np.ndarray,
            lags: int = N_LAGS) -> pd.DataFrame:
    cols = {}
    for name in names:
        for lag in range(lags + 1):
            cols[f"{name}_l{lag}"] = panel.lagged(name, lag)[si, di]
    return pd.DataFrame(cols)


def _history(panel: FeaturePanel, si: np.ndarray, di: np.ndarray, gap: int) -> pd.DataFrame:
    cols = {}
    t = panel.arrays["traded"]
    for j in range(1, HISTORY_DAYS + 1):
        back = di - gap - j
        ok = back >= 0
        v = np.full(len(di), np.nan)
        v[ok] = t[si[ok], back[ok]]
        cols[f"traded_m{gap + j}"] = v
    return pd.DataFrame(cols)


def _task_data(task, group, panel, si, di, labels, history_gap=None) -> TaskData:
    keys = pd.DataFrame({"symbol": [panel.symbols[i] for i in si],
                         "day": [panel.calendar.days[i] for i in di], "day_index": di})
    blocks = {"network": _gather(panel, NETWORK_FEATURES, si, di),
              "price": _gather(panel, PRICE_FEATURES, si, di)}
    if history_gap is not None:
        blocks["history"] = _history(panel, si, di, history_gap)
    return TaskData(task, str(group), keys, np.asarray(labels, dtype=int), blocks)


def assemble_conformance(panel: FeaturePanel, scores: pd.DataFrame, category: str) -> TaskData:
    sub = scores[scores["category"] == category]
    sub = sub[sub["symbol"].isin(panel.sym_index) & sub["day"].isin(panel.calendar._index)]
    sub = sub.sort_values(["day", "symbol"], kind="mergesort")
    si = sub["symbol"].map(panel.sym_index).to_numpy(dtype=int)
    di = sub["day"].map(panel.calendar._index).to_numpy(dtype=int)
    return _task_data("conformance", category, panel, si, di, sub["conforms"].to_numpy())


def consecutive_counts(panel: FeaturePanel) -> np.ndarray:
    """run[s, i] = number of consecutive traded days immediately before day i."""
    t = panel.arrays["traded"]
    run = np.zeros(t.shape, dtype=int)
    for i in range(1, t.shape[1]):
        run[:, i] = np.where(t[:, i - 1] > 0, run[:, i - 1] + 1, 0)
    return run


def assemble_optimality(panel: FeaturePanel, labels: pd.DataFrame, k: int) -> TaskData:
    lab = labels[labels["symbol"].isin(panel.sym_index)].sort_values(["day", "symbol", "trade"], kind="mergesort")
    si = lab["symbol"].map(panel.sym_index).to_numpy(dtype=int)
    di = lab["day"].map(panel.calendar._index).to_numpy(dtype=int)
    run = consecutive_counts(panel)[si, di]
    keep = run >= k
    return _task_data("optimality", k, panel, si[keep], di[keep], lab["locally_optimal"].to_numpy()[keep])


def unobserved_mask(panel: FeaturePanel, k: int, week_days: int = 5) -> np.ndarray:
    """mask[s, i]: symbol s had no trade in the week_days * k trading days before day i."""
    t = panel.arrays["traded"]
    if k == 0:
        return np.ones(t.shape, dtype=bool)
    w = week_days * k
    csum = np.concatenate([np.zeros((t.shape[0], 1)), np.cumsum(t, axis=1)], axis=1)
    mask = np.zeros(t.shape, dtype=bool)
    i = np.arange(w, t.shape[1])
    mask[:, w:] = (csum[:, i] - csum[:, i - w]) == 0
    return mask


def assemble_sudden(panel: FeaturePanel, k: int, week_days: int = 5) -> TaskData:
    mask = unobserved_mask(panel, k, week_days)
    # day-major ordering, matching the other tasks
    di, si = np.nonzero(mask.T)
    labels = panel.arrays["traded"][si, di] > 0
    return _task_data("sudden", k, panel, si, di, labels, history_gap=week_days * k)


def assemble(task: str, panel: FeaturePanel, *, scores=None, labels=None, category=None, k: int = 0,
             week_days: int = 5) -> TaskData:
    if task == "conformance":
        return assemble_conformance(panel, scores, category)
    if task == "optimality":
        return assemble_optimality(panel, labels, k)
    if task == "sudden":
        return assemble_sudden(panel, k, week_days)
    raise ValidationError(f"unknown task {task!r}")


# -- splits and balancing ------------------------------------------------------------


def time_bins(day_index: np.ndarray, n_days: int, bin_size: int = 100) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """(bin, train_mask, test_mask) for every bin after the first.

    Bins are consecutive runs of ``bin_size`` trading days (the last may be
    shorter). The corpus must span at least two full bins.
    """
    if bin_size < 1:
        raise ValidationError("bin size must be positive")
    if n_days < 2 * bin_size:
        raise ValidationError(
            f"corpus has {n_days} trading days, fewer than two bins of {bin_size}; use a smaller --bin"
        )
    n_bins = -(-n_days // bin_size)
    b = np.asarray(day_index) // bin_size
    return [(i, b < i, b == i) for i in range(1, n_bins)]


def balance(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of all minority-class rows plus an equal-size random majority sample."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValidationError("a class is empty")
    small, big = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    pick = rng.choice(big, size=len(small), replace=False)
    return np.sort(np.concatenate([small, pick]))


# -- evaluation -------------------------------------------------------------------------


@dataclass
class EvalReport:
    task: str
    group: str
    feature_set: str
    bins: pd.DataFrame         # bin, n_train, n_test, accuracy, note
    pooled_accuracy: float | None
    n_test: int

    def to_frame(self) -> pd.DataFrame:
        out = self.bins.copy()
        out.insert(0, "feature_set", self.feature_set)
        out.insert(0, "group", self.group)
        out.insert(0, "task", self.task)
        out["pooled_accuracy"] = self.pooled_accuracy
        return out


@dataclass
class SplitResult:
    bin: int
    model: LogisticModel | None
    test_rows: np.ndarray       # indices into TaskData, balanced test set
    predictions: np.ndarray
    note: str = ""


def split_rngs(seed: int, bin_id: int):
    return np.random.default_rng([seed, bin_id, 0]), np.random.default_rng([seed, bin_id, 1])


def run_split(data: TaskData, X: np.ndarray, bin_id: int, train: np.ndarray, test: np.ndarray,
              seed: int, lam: float = 1e-3, max_iter: int = 100, tol: float = 1e-8) -> SplitResult:
    tr_rng, te_rng = split_rngs(seed, bin_id)
    tr_idx, te_idx = np.flatnonzero(train), np.flatnonzero(test)
    y = data.labels
    try:
        tr = tr_idx[balance(y[tr_idx], tr_rng)]
        te = te_idx[balance(y[te_idx], te_rng)]
    except ValidationError:
        return SplitResult(bin_id, None, np.empty(0, dtype=int), np.empty(0), "class empty")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = fit_logistic(X[tr], y[tr], lam, max_iter, tol)
    return SplitResult(bin_id, model, te, model.predict(X[te]),
                       "" if model.converged else "not converged")


def bin_positions(data: TaskData, origin: date | None = None) -> np.ndarray:
    """Trading-day index of each row, or calendar days since ``origin`` when given."""
    if origin is None:
        return data.keys["day_index"].to_numpy()
    return np.array([(d - origin).days for d in data.keys["day"]], dtype=int)


def evaluate_one(data: TaskData, feature_set: str, n_days: int, bin_size: int = 100, seed: int = 7,
                 lam: float = 1e-3, max_iter: int = 100, tol: float = 1e-8,
                 origin: date | None = None) -> EvalReport:
    """Walk-forward evaluation of one task instance and feature set.

    With ``origin`` set, bins are ``bin_size`` calendar days counted from
    ``origin`` and ``n_days`` is the calendar span.
    """
    raw = data.raw(feature_set)
    rows = []
    correct = total = 0
    for b, train, test in time_bins(bin_positions(data, origin), n_days, bin_size):
        X, _ = data.matrix(feature_set, ref=train, raw=raw)
        res = run_split(data, X, b, train, test, seed, lam, max_iter, tol)
        n_train = int(2 * min(data.labels[train].sum(), (1 - data.labels[train]).sum()))
        if res.model is None:
            rows.append((b, n_train, 0, None, res.note))
            continue
        hit = int((res.predictions == data.labels[res.test_rows]).sum())
        n = len(res.test_rows)
        correct += hit
        total += n
        rows.append((b, n_train, n, hit / n, res.note))
    bins = pd.DataFrame(rows, columns=["bin", "n_train", "n_test", "accuracy", "note"])
    return EvalReport(data.task, data.group, feature_set, bins, correct / total if total else None, total)


def evaluate(datasets: Sequence[TaskData], feature_sets: Sequence[str], n_days: int, bin_size: int = 100,
             seed: int = 7, jobs: int = 1, **fit_kw) -> list[EvalReport]:
    """One report per (task instance, feature set); results do not depend on ``jobs``."""
    work = [(d, fs) for d in datasets for fs in feature_sets]
    if jobs == 1:
        return [evaluate_one(d, fs, n_days, bin_size, seed, **fit_kw) for d, fs in work]
    return Parallel(n_jobs=jobs)(delayed(evaluate_one)(d, fs, n_days, bin_size, seed, **fit_kw) for d, fs in work)


def reports_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    if not reports:
        return pd.DataFrame(columns=["task", "group", "feature_set", "bin", "n_train", "n_test",
                                     "accuracy", "note", "pooled_accuracy"])
    return pd.concat([r.to_frame() for r in reports], ignore_index=True)


def pooled(reports: Sequence[EvalReport]) -> dict[tuple[str, str], float | None]:
    return {(r.group, r.feature_set): r.pooled_accuracy for r in reports}
