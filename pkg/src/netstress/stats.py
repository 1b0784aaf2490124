"""Fixed-effects OLS panels, classical inference and Durbin-Watson diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import integrate, optimize
from scipy import stats as sps

from .errors import CollinearityError, ValidationError
from .ingest import TradingCalendar

WEEKDAYS = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]

TERM_LABELS = {
    "abs_change": "Stock price change",
    "f_lag1": "f-lag(-1)",
    "f_lag2": "f-lag(-2)",
    "vix": "VIX",
}


@dataclass
class OlsFit:
    names: list[str]
    beta: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    residuals: np.ndarray
    dof: int
    sigma2: float
    dropped_rows: int = 0
    pruned: list[str] = field(default_factory=list)

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def pvalue(self, name: str) -> float:
        return float(self.p[self.names.index(name)])


def ols_fit(X, y, names: Sequence[str] | None = None, dropped_rows: int = 0) -> OlsFit:
    """Least squares via pivoted QR with classical standard errors.

    All-zero columns are pruned (and reported); any remaining rank deficiency
    raises :class:`CollinearityError` naming the offending columns.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError("X must be 2-D with one row per response")
    names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
    keep = np.any(X != 0, axis=0)
    pruned = [n for n, k in zip(names, keep) if not k]
    X = X[:, keep]
    names = [n for n, k in zip(names, keep) if k]
    n, k = X.shape
    if n < k:
        raise ValidationError(f"need at least as many rows ({n}) as columns ({k})")

    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag.max() * max(n, k) * np.finfo(float).eps * 10 if k else 0.0
    rank = int(np.sum(diag > tol))
    if rank < k:
        raise CollinearityError(names[j] for j in piv[rank:])

    coef_p = scipy.linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(k)
    beta[piv] = coef_p
    resid = y - X @ beta
    dof = n - k
    ssr = float(resid @ resid)
    sigma2 = ssr / dof if dof > 0 else float("nan")
    Rinv = scipy.linalg.solve_triangular(R, np.eye(k))
    cov_p = sigma2 * (Rinv @ Rinv.T)
    se = np.empty(k)
    se[piv] = np.sqrt(np.diag(cov_p))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    p = 2 * sps.t.sf(np.abs(t), dof) if dof > 0 else np.full(k, np.nan)

    has_const = any(np.all(X[:, j] == X[0, j]) for j in range(k))
    ybar = y.mean() if has_const else 0.0
    sst = float(((y - ybar) ** 2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return OlsFit(names, beta, se, t, p, r2, resid, dof, sigma2, dropped_rows, pruned)


# -- panel design --------------------------------------------------------------


@dataclass(frozen=True)
class PanelSpec:
    feature: str
    fixed_effects: str = "stock"      # stock | industry | none
    weekday_effects: bool = True
    lags: int = 2
    vix: bool = True
    intercept: bool = True


@dataclass
class Design:
    X: pd.DataFrame
    y: pd.Series
    keys: pd.DataFrame                # symbol, day of every retained row
    dropped: int


def add_lags(frame: pd.DataFrame, feature: str, calendar: TradingCalendar, lags: int) -> pd.DataFrame:
    """Attach ``f_lag1..f_lagK`` (trading-calendar lags of ``feature`` within each symbol)."""
    idx = {d: i for i, d in enumerate(calendar.days)}
    base = frame[["symbol", "day", feature]].copy()
    base["t"] = base["day"].map(idx)
    out = base
    for k in range(1, lags + 1):
        lagged = base[["symbol", "t", feature]].rename(columns={feature: f"f_lag{k}"})
        lagged["t"] = lagged["t"] + k
        out = out.merge(lagged, on=["symbol", "t"], how="left")
    return out


def dummies(values: Sequence, prefix: str, levels: Sequence | None = None) -> pd.DataFrame:
    """Indicator columns for every level except the first (the reference level)."""
    vals = pd.Series(list(values))
    levels = sorted(set(vals)) if levels is None else list(levels)
    cols = {f"{prefix}{lv}": (vals == lv).astype(float).to_numpy() for lv in levels[1:]}
    return pd.DataFrame(cols, index=range(len(vals)))


def build_design(frame: pd.DataFrame, changes: pd.DataFrame, vix: Mapping, spec: PanelSpec,
                 calendar: TradingCalendar, industry: Mapping[str, str] | None = None) -> Design:
    """Rows with the dependent feature, its lags, |change| and VIX, plus dummy columns."""
    if spec.feature not in frame.columns:
        raise ValidationError(f"unknown feature {spec.feature!r}")
    df = add_lags(frame, spec.feature, calendar, spec.lags)
    df = df.merge(changes[["symbol", "day", "abs_change"]], on=["symbol", "day"], how="left")
    if spec.vix:
        df["vix"] = df["day"].map(lambda d: vix.get(d, np.nan)).astype(float)
    regs = ["abs_change"] + [f"f_lag{k}" for k in range(1, spec.lags + 1)] + (["vix"] if spec.vix else [])
    total = len(df)
    df = df.dropna(subset=[spec.feature, *regs])
    df = df.sort_values(["symbol", "day"], kind="mergesort").reset_index(drop=True)
    dropped = total - len(df)

    parts = []
    if spec.intercept:
        parts.append(pd.DataFrame({"const": np.ones(len(df))}))
    parts.append(df[regs].reset_index(drop=True))
    if spec.fixed_effects == "stock":
        parts.append(dummies(df["symbol"], "stock_"))
    elif spec.fixed_effects == "industry":
        industry = industry or {}
        missing = sorted(set(df["symbol"]) - set(industry))
        if missing:
            raise ValidationError("symbol missing from industry map: " + ", ".join(missing[:20]))
        parts.append(dummies(df["symbol"].map(industry), "industry_"))
    elif spec.fixed_effects != "none":
        raise ValidationError(f"unknown fixed effects {spec.fixed_effects!r}")
    if spec.weekday_effects:
        wd = df["day"].map(lambda d: d.weekday())
        dow = dummies(wd, "dow_")
        dow.columns = ["dow_" + WEEKDAYS[int(c[4:])] for c in dow.columns]
        parts.append(dow)
    X = pd.concat(parts, axis=1)
    return Design(X, df[spec.feature].astype(float), df[["symbol", "day"]], dropped)


def fit_panel(frame, changes, vix, spec: PanelSpec, calendar, industry=None) -> OlsFit:
    design = build_design(frame, changes, vix, spec, calendar, industry)
    return ols_fit(design.X.to_numpy(), design.y.to_numpy(), list(design.X.columns), design.dropped)


def stars(p: float) -> str:
    if p is None or not np.isfinite(p):
        return ""
    return "***" if p < 1e-4 else "**" if p < 1e-3 else "*" if p < 1e-2 else ""


def fit_table(fit: OlsFit, feature: str, fixed_effects: str) -> pd.DataFrame:
    """Main-term rows in the layout of a regression table, plus fit metadata rows."""
    rows = []
    for name, label in TERM_LABELS.items():
        if name in fit.names:
            i = fit.names.index(name)
            rows.append((feature, label, fit.beta[i], fit.se[i], fit.t[i], fit.p[i], stars(fit.p[i])))
    fe_label = {"stock": "Stock fixed effects", "industry": "Industry fixed effects"}.get(fixed_effects)
    rows.append((feature, "Day of week fixed effects", None, None, None, None,
                 "Y" if any(n.startswith("dow_") for n in fit.names) else "N"))
    if fe_label:
        rows.append((feature, fe_label, None, None, None, None, "Y"))
    rows.append((feature, "n", len(fit.residuals), None, None, None, ""))
    rows.append((feature, "R2", fit.r2, None, None, None, ""))
    rows.append((feature, "dropped_rows", fit.dropped_rows, None, None, None, ""))
    return pd.DataFrame(rows, columns=["feature", "term", "estimate", "se", "t_stat", "p_value", "stars"])


# -- Durbin-Watson ---------------------------------------------------------------


def durbin_watson(residuals) -> float:
    e = np.asarray(residuals, dtype=float)
    return float(np.sum(np.diff(e) ** 2) / np.sum(e**2))


def _prob_below(lams: np.ndarray, c: float) -> float:
    """P(sum lam_i z_i^2 / sum z_i^2 <= c) for iid standard normal z (Imhof)."""
    w = lams - c

    def integrand(u):
        theta = 0.5 * np.sum(np.arctan(w * u))
        log_rho = 0.25 * np.sum(np.log1p((w * u) ** 2))
        return math.sin(theta) / u * math.exp(-log_rho)

    val, _ = integrate.quad(integrand, 0, np.inf, limit=500, epsabs=1e-10)
    return 0.5 - val / math.pi


def dw_exact_bounds(n: int, k: int, alpha: float = 0.05) -> tuple[float, float]:
    """Lower/upper bound critical values for DW at level ``alpha``.

    ``k`` counts regressors excluding the intercept. The bounding statistics
    are ratios of quadratic forms in the eigenvalues 2(1 - cos(pi j / n)) of
    the differencing matrix; their quantiles come from Imhof's inversion.
    """
    kk = k + 1
    if n - kk < 1:
        raise ValidationError(f"need n > k + 1 (n={n}, k={k})")
    nu = 2.0 * (1.0 - np.cos(np.pi * np.arange(1, n) / n))
    low = nu[: n - kk]
    high = nu[kk - 1 : n - 1]

    def quantile(lams):
        return optimize.brentq(lambda c: _prob_below(lams, c) - alpha, lams.min() + 1e-9, lams.max() - 1e-9,
                               xtol=1e-7)

    return quantile(low), quantile(high)


@lru_cache(maxsize=1)
def _dw_table() -> pd.DataFrame:
    ref = resources.files("netstress") / "data" / "dw_bounds_5pct.csv"
    with resources.as_file(ref) as p:
        return pd.read_csv(p)


def dw_bounds(n: int, k: int) -> tuple[float, float]:
    """Tabulated 5% (d_L, d_U), linearly interpolated in n; n is clamped to the table range."""
    tab = _dw_table()
    sub = tab[tab["k"] == k].sort_values("n")
    if sub.empty:
        raise ValidationError(f"no Durbin-Watson bounds tabulated for k={k}")
    ns = sub["n"].to_numpy(dtype=float)
    x = min(max(float(n), ns[0]), ns[-1])
    return float(np.interp(x, ns, sub["dL"])), float(np.interp(x, ns, sub["dU"]))


def dw_classify(dw: float, n: int, k: int) -> tuple[str, str]:
    """(positive, negative) verdicts: 'none' (no evidence), 'evidence' or 'inconclusive'."""
    dl, du = dw_bounds(n, k)

    def verdict(stat):
        if stat > du:
            return "none"
        if stat < dl:
            return "evidence"
        return "inconclusive"

    return verdict(dw), verdict(4.0 - dw)


def dw_per_stock(frame: pd.DataFrame, changes: pd.DataFrame, feature: str,
                 calendar: TradingCalendar) -> tuple[pd.DataFrame, dict]:
    """Per-stock reduced regression f ~ |change| + f-lag1 + f-lag2 (no intercept) and DW.

    Residuals are ordered by trading day. Stocks with fewer than 3 residuals,
    too few rows for the regression, or an exact fit are skipped and counted.
    """
    spec = PanelSpec(feature, fixed_effects="none", weekday_effects=False, vix=False, intercept=False)
    design = build_design(frame, changes, {}, spec, calendar)
    k = design.X.shape[1]
    rows = []
    skipped = 0
    for sym, idx in design.keys.groupby("symbol", sort=True).groups.items():
        idx = np.asarray(idx)
        n = len(idx)
        if n < max(3, k + 2):
            skipped += 1
            continue
        X = design.X.to_numpy()[idx]
        y = design.y.to_numpy()[idx]
        try:
            fit = ols_fit(X, y, list(design.X.columns))
        except (CollinearityError, ValidationError):
            skipped += 1
            continue
        if not np.any(fit.residuals):
            skipped += 1
            continue
        dw = durbin_watson(fit.residuals)
        pos, neg = dw_classify(dw, n, len(fit.names))
        rows.append((sym, n, dw, pos, neg))
    out = pd.DataFrame(rows, columns=["symbol", "n", "dw", "positive", "negative"])
    m = len(out)
    summary = {
        "stocks": m,
        "skipped": skipped,
        "no_positive_frac": float((out["positive"] == "none").mean()) if m else None,
        "no_negative_frac": float((out["negative"] == "none").mean()) if m else None,
        "positive_inconclusive": int((out["positive"] == "inconclusive").sum()),
        "negative_inconclusive": int((out["negative"] == "inconclusive").sum()),
    }
    return out, summary
