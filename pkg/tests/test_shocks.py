import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import bar, day
from netstress.errors import ValidationError
from netstress.ingest import TradingCalendar
from netstress.shocks import (
    ShockEvent,
    aggregation_curve,
    detect_shocks,
    parse_grid,
    price_change,
    price_changes,
    shock_response,
)


def _bars(abs_changes, sym="S"):
    return {(sym, day(i)): bar(sym, day(i), 100.0, 100.0 * (1 + c)) for i, c in enumerate(abs_changes)}


def test_price_change_examples():
    bars = {("S", day(0)): bar("S", day(0), 100, 105), ("S", day(1)): bar("S", day(1), 100, 100),
            ("S", day(2)): bar("S", day(2), 50, 40)}
    assert price_change(bars, "S", day(0)) == pytest.approx(0.05)
    assert price_change(bars, "S", day(1)) == 0.0
    assert price_change(bars, "S", day(2)) == pytest.approx(-0.2)
    with pytest.raises(ValidationError):
        price_change(bars, "S", day(5))


@settings(max_examples=50)
@given(st.floats(0.01, 1e4), st.floats(0.01, 1e4), st.floats(0.001, 1000))
def test_price_change_scale_invariant(o, c, k):
    a = price_change({("S", day(0)): bar("S", day(0), o, c)}, "S", day(0))
    b = price_change({("S", day(0)): bar("S", day(0), o * k, c * k)}, "S", day(0))
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_detect_examples():
    ev = detect_shocks(_bars([0.01, 0.02, 0.03, 0.08]), 0.05)
    assert [(e.symbol, e.day) for e in ev] == [("S", day(3))]
    assert detect_shocks(_bars([0.06, 0.01, 0.01, 0.08]), 0.05) == []
    assert detect_shocks(_bars([0.04] * 10), 0.05) == []


def test_detect_needs_three_prior_days():
    assert detect_shocks(_bars([0.01, 0.01, 0.08]), 0.05) == []


def test_detect_prior_days_on_trading_calendar():
    # S lacks a bar on day 1 although the market traded: ineligible
    bars = _bars([0.01, 0.01, 0.01, 0.08])
    del bars[("S", day(1))]
    bars[("T", day(1))] = bar("T", day(1))
    assert detect_shocks(bars, 0.05) == []


def test_detect_rejects_nonpositive_x():
    with pytest.raises(ValidationError):
        detect_shocks(_bars([0.1]), 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 0.12), min_size=4, max_size=30), st.floats(0.01, 0.05), st.floats(0.051, 0.11))
def test_shock_sets_antitone_in_abs_change(series, x1, x2):
    bars = _bars(series)
    for e in detect_shocks(bars, x2):
        assert abs(e.change) > x1


def test_parse_grid():
    assert parse_grid("-0.02:0.02:0.01") == [-0.02, -0.01, 0.0, 0.01, 0.02]
    assert parse_grid("0.05,0.1") == [0.0, 0.05, 0.1]


def _frame(rows):
    f = pd.DataFrame(rows, columns=["symbol", "day", "f", "change"])
    ch = f[["symbol", "day", "change"]].copy()
    ch["abs_change"] = ch["change"].abs()
    return f[["symbol", "day", "f"]], ch


def test_curve_examples():
    f, ch = _frame([("S", day(0), 1.0, 0.1), ("S", day(1), 3.0, 0.2)])
    c = aggregation_curve(f, ch, "f", [0.0, 0.05, 0.15, 0.5]).set_index("delta")
    assert c.loc[0.0, "mean"] == 2.0
    assert c.loc[0.05, "mean"] == 2.0
    assert c.loc[0.15, "mean"] == 3.0
    assert c.loc[0.5, "n"] == 0 and pd.isna(c.loc[0.5, "mean"])
    with pytest.raises(ValidationError):
        aggregation_curve(f, ch, "missing", [0.0])
    with pytest.raises(ValidationError):
        aggregation_curve(f, ch, "f", [0.1])


def test_curve_ci_and_monotone_counts():
    rng = np.random.default_rng(0)
    ch_vals = rng.normal(0, 0.03, 500)
    f, ch = _frame([("S", day(i), float(v), float(c)) for i, (v, c) in enumerate(zip(rng.normal(size=500), ch_vals))])
    grid = parse_grid("-0.1:0.1:0.01")
    c = aggregation_curve(f, ch, "f", grid)
    zero = c[c["delta"] == 0].iloc[0]
    assert zero["mean"] == pytest.approx(f["f"].mean())
    half = 1.96 * f["f"].std(ddof=1) / np.sqrt(500)
    assert zero["hi"] - zero["mean"] == pytest.approx(half)
    pos = c[c["delta"] >= 0]["n"].to_numpy()
    neg = c[c["delta"] <= 0]["n"].to_numpy()[::-1]
    assert (np.diff(pos) <= 0).all() and (np.diff(neg) <= 0).all()


def test_response_constant_feature():
    days = [day(i) for i in range(20)]
    cal = TradingCalendar(days)
    f = pd.DataFrame({"symbol": "S", "day": days, "f": 2.0})
    r = shock_response(f, [ShockEvent("S", days[5], 0.05, 0.1)], "f", cal)
    assert r.recovery_day == 1
    assert r.shock[0] == r.non_shock[0] == 2.0


def test_response_planted_two_day_elevation():
    rng = np.random.default_rng(3)
    days = [day(i) for i in range(300)]
    cal = TradingCalendar(days)
    rows = []
    shocks_ = []
    for k in range(20):
        s = f"S{k}"
        vals = rng.normal(0.0, 1.0, len(days))
        for t0 in range(10, 290, 40):
            shocks_.append(ShockEvent(s, days[t0], 0.05, 0.1))
            vals[t0:t0 + 3] += 5.0   # shock day and the 2 days after
        rows += [(s, d, v) for d, v in zip(days, vals)]
    f = pd.DataFrame(rows, columns=["symbol", "day", "f"])
    r = shock_response(f, shocks_, "f", cal, horizon=7, band=0.25)
    assert r.recovery_day == 3
    assert r.welch_p < 0.01
    out = r.to_frame()
    assert set(out["kind"]) == {"offset", "shock_day", "non_shock_day", "grand"}


def test_response_errors():
    days = [day(i) for i in range(5)]
    f = pd.DataFrame({"symbol": "S", "day": days, "f": 1.0})
    with pytest.raises(ValidationError):
        shock_response(f, [ShockEvent("S", days[0], 0.05, 0.1)], "f", TradingCalendar(days), horizon=0)
    with pytest.raises(ValidationError):
        shock_response(f, [], "f", TradingCalendar(days))


def test_price_changes_frame():
    out = price_changes(_bars([0.01, -0.02]))
    assert list(out.columns) == ["symbol", "day", "change", "abs_change"]
    assert (out["abs_change"] == out["change"].abs()).all()
