import numpy as np
import pytest
from scipy import stats as sps

from netstress import graphs, shocks
from netstress.errors import ValidationError
from netstress.ingest import parse_dataset
from netstress.stats import PanelSpec, fit_panel
from netstress.synth import SynthConfig, generate, generate_dataset, generate_panel

TINY = SynthConfig(seed=3, n_stocks=8, n_days=30, n_insiders=12, n_outsiders=20)


def _digests(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_same_seed_byte_identical(tmp_path):
    generate(TINY, tmp_path / "a")
    generate(TINY, tmp_path / "b")
    assert _digests(tmp_path / "a") == _digests(tmp_path / "b")
    generate(SynthConfig(**{**TINY.to_dict(), "seed": 4}), tmp_path / "c")
    assert _digests(tmp_path / "a")["messages.csv"] != _digests(tmp_path / "c")["messages.csv"]


def test_files_load_without_warnings(tmp_path):
    ds = generate(TINY, tmp_path)
    back = parse_dataset(tmp_path)
    assert back.warnings == ()
    assert back.symbols == ds.symbols and len(back.messages) == len(ds.messages)
    assert len(back.trades) == len(ds.trades)


def test_degenerate_config():
    with pytest.raises(ValidationError, match="insiders"):
        SynthConfig(n_insiders=0)
    with pytest.raises(ValidationError):
        SynthConfig(kappa=-1.0)


def test_toml_config(tmp_path):
    p = tmp_path / "synth.toml"
    p.write_text('[synth]\nn_stocks = 12\nkappa = 0.0\nevent_rate = [1.0, 2.0]\n')
    cfg = SynthConfig.from_toml(p, seed=9)
    assert (cfg.n_stocks, cfg.kappa, cfg.event_rate, cfg.seed) == (12, 0.0, (1.0, 2.0), 9)
    p.write_text("n_stonks = 3\n")
    with pytest.raises(ValidationError, match="n_stonks"):
        SynthConfig.from_toml(p)


def test_truth_table(small_corpus):
    ds, truth = small_corpus
    assert len(truth) == len(ds.symbols) * len(ds.calendar)
    ch = shocks.price_changes(ds.bars).set_index(["symbol", "day"])["change"]
    t = truth.set_index(["symbol", "day"])["change"]
    assert np.allclose(ch.loc[t.index].to_numpy(), t.to_numpy(), atol=1e-6)
    traded = {(r.symbol, r.day) for r in ds.trades}
    assert set(map(tuple, truth.loc[truth["traded"], ["symbol", "day"]].to_numpy())) == traded


def _corpus(kappa, **kw):
    cfg = SynthConfig(seed=5, n_stocks=100, n_days=150, n_insiders=30, n_outsiders=80,
                      event_rate=(2.0, 4.0), kappa=kappa, **kw)
    ds, _ = generate_dataset(cfg)
    return ds, graphs.compute_archive(ds), shocks.price_changes(ds.bars)


def test_kappa_zero_no_clustering_coupling():
    ds, arch, ch = _corpus(0.0)
    fit = fit_panel(arch.frame, ch, ds.vix, PanelSpec("clustering"), ds.calendar)
    assert len(fit.residuals) > 8000
    assert abs(fit.coef("abs_change")) <= 3 * fit.stderr("abs_change")


def test_large_kappa_shock_day_clustering():
    ds, arch, _ = _corpus(5.0)
    events = {(e.symbol, e.day) for e in shocks.detect_shocks(ds.bars, 0.05)}
    f = arch.frame.dropna(subset=["clustering"])
    on = np.array([(s, d) in events for s, d in zip(f["symbol"], f["day"])])
    c = f["clustering"].astype(float).to_numpy()
    res = sps.ttest_ind(c[on], c[~on], equal_var=False)
    assert c[on].mean() > c[~on].mean() and res.pvalue < 0.01


def test_lexicon_coupling_asymmetry(small_corpus):
    from netstress.lexicon import message_pct

    ds, truth = small_corpus
    pos = ds.lexicon["posemo"]
    tr = truth.set_index(["symbol", "day"])["change"]
    up, down = [], []
    for m in ds.messages[::3]:
        for s in m.mentions:
            v = message_pct(m.tokens, pos)
            (up if tr[(s, m.day)] > 0.02 else down if tr[(s, m.day)] < -0.02 else []).append(v)
    assert np.mean(up) > np.mean(down)


def test_panel_planted_coefficients():
    p = generate_panel(SynthConfig(seed=1), n_stocks=20, n_days=30)
    assert p.coefficients["clustering"] == pytest.approx(0.3)
    assert p.coefficients["border"] == pytest.approx(-0.2)
    assert len(p.frame) == 20 * 30
    z = generate_panel(SynthConfig(seed=1, kappa=0.0), n_stocks=5, n_days=10)
    assert all(v == 0 for v in z.coefficients.values())
