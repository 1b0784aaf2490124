"""One test per acceptance criterion; each logs a PASS/FAIL line via ``record``."""
import json
import math
import random
import subprocess
import sys
import time
from dataclasses import replace
from datetime import timedelta
from fractions import Fraction

import numpy as np
import pytest

import oracles
from helpers import bar, day, msg
from netstress import graphs, lexicon, predict, shocks, trades
from netstress.ingest import PriceBar, TradeRecord, TradingCalendar, parse_dataset
from netstress.stats import PanelSpec, durbin_watson, fit_panel
from netstress.synth import SynthConfig, generate_dataset, generate_panel

G = graphs.StockDayGraph.from_edges
PLANTED = SynthConfig(seed=7, n_stocks=100, n_days=300)


def _pipeline(cfg):
    ds, truth = generate_dataset(cfg)
    arch = graphs.compute_archive(ds).filter(2)
    changes = shocks.price_changes(ds.bars)
    book = trades.TradeBook(ds.trades, ds.calendar, ds.symbols)
    panel = predict.build_panel(arch.frame, changes, ds.calendar, ds.symbols, book.traded)
    return ds, arch, changes, panel


@pytest.fixture(scope="module")
def planted():
    return _pipeline(PLANTED)


# -- 1 ---------------------------------------------------------------------------------------


def test_metric_oracle_equivalence(record):
    rng = random.Random(2024)
    start = time.perf_counter()
    mismatches = 0
    people = [f"p{i}" for i in range(8)]
    for _ in range(1000):
        nodes = people[:rng.randint(2, 8)]
        edges = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:] if rng.random() < 0.4]
        if not edges:
            edges = [(nodes[0], nodes[1])]
        border = [(rng.choice(nodes), f"x{j}") for j in range(rng.randint(0, 3))]
        raw = [(*rng.sample(people, 2), day(rng.randint(0, 5))) for _ in range(rng.randint(0, 30))]
        hist = graphs.HistoryIndex([msg(i, a, b, d) for i, (a, b, d) in enumerate(raw)])
        alpha = rng.choice([0.1, 0.25, 0.5, 1.0])
        g = G(edges, border, day=day(4))
        ns = sorted(g.nodes)
        got = (graphs.clustering(g), graphs.components(g), graphs.openness(g),
               graphs.tie_strength(g, hist, alpha, "incidence"),
               graphs.tie_strength(g, hist, alpha, "either_endpoint"))
        a_exact = Fraction(alpha).limit_denominator(10**9)
        want = (oracles.clustering(ns, edges), oracles.largest_and_k90(ns, edges),
                oracles.openness(edges, border),
                oracles.strength(edges, raw, day(4), a_exact, "incidence"),
                oracles.strength(edges, raw, day(4), a_exact, "either_endpoint"))
        mismatches += got != want
    elapsed = time.perf_counter() - start
    ok = record("1 metric oracle equivalence", mismatches == 0 and elapsed < 10,
                f"{mismatches} mismatches / 1000 graphs in {elapsed:.2f}s (limit 10s)")
    assert ok


# -- 2 ---------------------------------------------------------------------------------------


def test_shock_detection_scan(record):
    rng = np.random.default_rng(99)
    mismatches = 0
    for trial in range(500):
        n = int(rng.integers(1, 25))
        days = [day(i) for i in range(n)]
        x = float(rng.choice([0.02, 0.05, 0.08]))
        series = {}
        bars = {}
        for s in ("A", "B"):
            vals = {}
            for d in days:
                if rng.random() < 0.08:
                    continue  # missing bar
                c = float(rng.choice([rng.uniform(0, 0.1), x]))  # exact-threshold ties included
                sign = 1 if rng.random() < 0.5 else -1
                bars[(s, d)] = bar(s, d, 100.0, 100.0 * (1 + sign * c))
                vals[d] = abs(bars[(s, d)].close - 100.0) / 100.0
            series[s] = vals
        if not bars:
            continue
        cal = TradingCalendar(days)
        got = {(e.symbol, e.day) for e in shocks.detect_shocks(bars, x, cal)}
        mismatches += got != oracles.shocks(series, days, x)
    ok = record("2 shock detection", mismatches == 0, f"{mismatches} mismatches / 500 series")
    assert ok


# -- 3 ---------------------------------------------------------------------------------------


def test_ols_recovery(record):
    start = time.perf_counter()
    p1 = generate_panel(SynthConfig(seed=7, kappa=1.0))
    p0 = generate_panel(SynthConfig(seed=7, kappa=0.0))
    out, ok = [], True
    for feat, target in (("clustering", 0.3), ("border", -0.2)):
        f1 = fit_panel(p1.frame, p1.changes, p1.vix, PanelSpec(feat), p1.calendar)
        f0 = fit_panel(p0.frame, p0.changes, p0.vix, PanelSpec(feat), p0.calendar)
        b1, b0, se0 = f1.coef("abs_change"), f0.coef("abs_change"), f0.stderr("abs_change")
        ok &= abs(b1 - target) <= 0.02 and abs(b0) <= 3 * se0
        out.append(f"{feat}: k=1 beta {b1:+.4f} (target {target:+.1f}), k=0 beta {b0:+.4f} (SE {se0:.4f})")
        ok &= len(f1.residuals) >= 10_000
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30
    assert record("3 OLS recovery", ok, "; ".join(out) + f"; {len(f1.residuals)} rows; {elapsed:.1f}s")


# -- 4 ---------------------------------------------------------------------------------------


def test_durbin_watson(record):
    rng = np.random.default_rng(4)
    mean = float(np.mean([durbin_watson(rng.normal(size=500)) for _ in range(100)]))
    hand = (durbin_watson([1, 1, 1, 1]), durbin_watson([1, -1, 1, -1]))
    ok = abs(mean - 2) <= 0.05 and hand == (0.0, 3.0)
    assert record("4 Durbin-Watson", ok, f"mean DW {mean:.4f} over 100 trials; hand cases {hand}")


# -- 5 ---------------------------------------------------------------------------------------


def test_sign_pattern(record, planted):
    ds, arch, changes, _ = planted
    want = {"nodes": 1, "clustering": 1, "strength": 1, "border": -1}
    out, ok = [], True
    for feat, sign in want.items():
        fit = fit_panel(arch.frame, changes, ds.vix, PanelSpec(feat), ds.calendar)
        b, t = fit.coef("abs_change"), fit.coef("abs_change") / fit.stderr("abs_change")
        ok &= np.sign(b) == sign
        out.append(f"{feat} {b:+.3f} (t={t:+.1f})")
    assert record("5 sign pattern", ok, ", ".join(out))


# -- 6 ---------------------------------------------------------------------------------------


def test_conformance_network_vs_price(record):
    # latent cohesion drives both tie structure and cognitive word use; prices play no part
    cfg = replace(PLANTED, kappa=0.0, cognitive_coupling=0.0)
    ds, _, _, panel = _pipeline(cfg)
    scores = lexicon.conformance(ds, ds.lexicon.subset(["cogmech"]))
    td = predict.assemble("conformance", panel, scores=scores, category="cogmech")
    acc = {fs: predict.evaluate_one(td, fs, len(ds.calendar)).pooled_accuracy
           for fs in ("network", "price", "network+price")}
    gap = acc["network"] - acc["price"]
    comb = abs(acc["network+price"] - acc["network"])
    ok = gap >= 0.10 and comb <= 0.05
    assert record("6 conformance network vs price", ok,
                  f"network {acc['network']:.3f}, price {acc['price']:.3f}, combined {acc['network+price']:.3f}; "
                  f"gap {gap:.3f} (>=0.10), |combined-network| {comb:.3f} (<=0.05)")


# -- 7 ---------------------------------------------------------------------------------------


def test_sudden_trading(record, planted):
    ds, _, _, panel = planted
    n = len(ds.calendar)
    hist = predict.evaluate_one(predict.assemble("sudden", panel, k=0), "history", n).pooled_accuracy
    ok = hist > 0.8
    parts = [f"k=0 history {hist:.3f} (>0.8)"]
    for k in (4, 5, 6):
        td = predict.assemble("sudden", panel, k=k)
        net = predict.evaluate_one(td, "network+history", n).pooled_accuracy
        price = predict.evaluate_one(td, "price+history", n).pooled_accuracy
        ok &= net - price >= 0.10
        parts.append(f"k={k} network+history {net:.3f} vs price+history {price:.3f}")
    assert record("7 sudden trading", ok, "; ".join(parts))


# -- 8 ---------------------------------------------------------------------------------------


def _check_labels(ds):
    labels, _ = trades.label_optimality(ds.trades, ds.bars, ds.calendar)
    labels = trades.add_loss(labels, ds.bars)
    want = oracles.optimality(ds.trades, ds.bars, ds.calendar.days)
    same = (list(labels["trade"]) == [i for i, _, _ in want]
            and list(labels["locally_optimal"]) == [o for _, o, _ in want]
            and list(labels["loss"]) == [x for _, _, x in want]
            and trades.total_loss(labels) == math.fsum(x for _, _, x in want))
    return same, len(want)


@pytest.fixture(scope="module")
def default_corpus(tmp_path_factory):
    """The default 200 x 500 corpus written by the CLI, timed."""
    root = tmp_path_factory.mktemp("default")
    start = time.perf_counter()
    res = subprocess.run([sys.executable, "-m", "netstress", "synth", "-o", str(root / "data")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return root, time.perf_counter() - start


def test_trade_labeling(record, planted, default_corpus):
    root, _ = default_corpus
    ok = True
    parts = []
    for name, ds in (("planted", planted[0]), ("default", parse_dataset(root / "data"))):
        same, n = _check_labels(ds)
        ok &= same
        parts.append(f"{name}: {n} trades {'match' if same else 'DIFFER'}")
    outs = []
    for i in range(2):
        out = root / f"baseline{i}.csv"
        res = subprocess.run([sys.executable, "-m", "netstress", "trades", "baseline", "--data",
                              str(root / "data"), "--seed", "13", "-o", str(out)], capture_output=True)
        ok &= res.returncode == 0
        outs.append(out.read_bytes())
    ok &= outs[0] == outs[1]
    a = trades.random_baseline(planted[0].trades, planted[0].bars, 5)
    ok &= a == trades.random_baseline(planted[0].trades, planted[0].bars, 5)
    parts.append(f"baseline CSV byte-identical: {outs[0] == outs[1]}")
    assert record("8 trade labeling", ok, "; ".join(parts))


# -- 9 ---------------------------------------------------------------------------------------


def _perturb_after(ds, cutoff, seed=0):
    """Scramble every message, price bar and trade dated strictly after ``cutoff``."""
    rng = np.random.default_rng(seed)
    people = sorted(ds.directory)
    msgs = []
    for m in ds.messages:
        if m.day <= cutoff:
            msgs.append(m)
        elif rng.random() < 0.6:
            r = people[rng.integers(len(people))]
            msgs.append(replace(m, receiver=r if r != m.sender else m.receiver,
                                timestamp=m.timestamp + timedelta(minutes=int(rng.integers(60)))))
    bars = {}
    for key, b in ds.bars.items():
        if b.day <= cutoff:
            bars[key] = b
        else:
            close = b.open * (1 + rng.normal(0, 0.08))
            bars[key] = PriceBar(b.symbol, b.day, b.open, close, max(b.open, close) * 1.01,
                                 min(b.open, close) * 0.99)
    tr = [t for t in ds.trades if t.day <= cutoff]
    later = [d for d in ds.calendar.days if d > cutoff]
    for _ in range(len(ds.trades) - len(tr)):
        s = ds.symbols[rng.integers(len(ds.symbols))]
        d = later[rng.integers(len(later))]
        tr.append(TradeRecord(s, d, "buy", bars[(s, d)].close, 10))
    return ds.replace(messages=tuple(msgs), bars=bars, trades=tuple(tr))


def test_leakage_probe(record, planted):
    ds, _, _, _ = planted
    bin_id, bin_size = 2, 100
    start = bin_id * bin_size
    cutoff_idx = start + 30
    cutoff = ds.calendar.days[cutoff_idx]
    ds2 = _perturb_after(ds, cutoff)
    assert len(ds2.calendar) == len(ds.calendar)
    arch2 = graphs.compute_archive(ds2).filter(2)
    book2 = trades.TradeBook(ds2.trades, ds2.calendar, ds2.symbols)
    panel2 = predict.build_panel(arch2.frame, shocks.price_changes(ds2.bars), ds2.calendar, ds2.symbols,
                                 book2.traded)
    labels = [trades.label_optimality(d.trades, d.bars, d.calendar)[0] for d in (ds, ds2)]
    cases = [
        ("sudden k=2", [predict.assemble("sudden", p, k=2) for p in (planted[3], panel2)],
         "network+price+history", cutoff_idx),
        # the optimality label of day d reads day d+1
        ("optimality k=0", [predict.assemble("optimality", p, labels=lab, k=0)
                            for p, lab in zip((planted[3], panel2), labels)], "network+price", cutoff_idx - 1),
    ]
    parts, ok = [], True
    for name, (a, b), fs, last in cases:
        n_cmp = 0
        same = True
        splits_a = predict.time_bins(a.keys["day_index"].to_numpy(), len(ds.calendar), bin_size)
        splits_b = predict.time_bins(b.keys["day_index"].to_numpy(), len(ds.calendar), bin_size)
        (_, tr_a, te_a), (_, tr_b, te_b) = splits_a[bin_id - 1], splits_b[bin_id - 1]
        Xa, _ = a.matrix(fs, ref=tr_a)
        Xb, _ = b.matrix(fs, ref=tr_b)
        ra = predict.run_split(a, Xa, bin_id, tr_a, te_a, seed=7)
        rb = predict.run_split(b, Xb, bin_id, tr_b, te_b, seed=7)
        same &= np.array_equal(ra.model.weights, rb.model.weights) and ra.model.intercept == rb.model.intercept
        ia = np.flatnonzero(te_a & (a.keys["day_index"].to_numpy() <= last))
        ib = np.flatnonzero(te_b & (b.keys["day_index"].to_numpy() <= last))
        same &= a.keys.iloc[ia].reset_index(drop=True).equals(b.keys.iloc[ib].reset_index(drop=True))
        pa, pb = ra.model.predict(Xa[ia]), rb.model.predict(Xb[ib])
        same &= np.array_equal(pa, pb)
        n_cmp = len(ia)
        # the perturbation must actually reach later rows, or the probe is vacuous
        later = te_a & (a.keys["day_index"].to_numpy() > last)
        moved = not np.array_equal(Xa[later][:200], Xb[te_b & (b.keys["day_index"].to_numpy() > last)][:200])
        ok &= same and moved and n_cmp > 0
        parts.append(f"{name}: weights and {n_cmp} test predictions {'unchanged' if same else 'CHANGED'}")
    assert record("9 leakage probe", ok, "; ".join(parts))


# -- 10 --------------------------------------------------------------------------------------


def test_end_to_end_determinism(record, default_corpus):
    root, synth_time = default_corpus
    digests, times = [], []
    for i in range(2):
        out = root / f"report{i}"
        start = time.perf_counter()
        res = subprocess.run([sys.executable, "-m", "netstress", "report", "--data", str(root / "data"),
                              "--seed", "7", "-o", str(out)], capture_output=True, text=True)
        times.append(time.perf_counter() - start)
        assert res.returncode == 0, res.stderr
        man = json.loads((out / "manifest.json").read_text())
        digests.append({k.rsplit("/", 1)[-1]: v for k, v in man["outputs"].items()})
    ok = digests[0] == digests[1] and len(digests[0]) >= 12 and max(times) < 300
    assert record("10 end-to-end determinism", ok,
                  f"{len(digests[0])} outputs identical: {digests[0] == digests[1]}; synth {synth_time:.0f}s, "
                  f"report {times[0]:.0f}s / {times[1]:.0f}s (limit 300s)")
