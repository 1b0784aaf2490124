"""Command-line entry point: one subcommand per pipeline stage plus ``report``.

Every output CSV gets a ``<output>.manifest.json`` sibling (``manifest.json``
inside the output directory for ``synth`` and ``report``) recording the
subcommand, resolved options, input and output digests and the tool version.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 runtime error.
Errors are reported as one line on stderr: ``netstress: <class>: <message>``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import __version__
from . import graphs, lexicon, predict, shocks, stats, synth, trades
from .errors import NetstressError, ValidationError
from .ingest import Dataset, parse_dataset, tag_mentions

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 2, 3, 4

REPORT_FEATURES = ["nodes", "clustering", "strength", "border"]
CURVE_FEATURES = ["nodes", "clustering", "strength", "border", "nodes_rel", "clustering_nu"]
RESPONSE_FEATURES = ["nodes_rel", "clustering", "strength", "border"]
SETS = {
    "conformance": ["network", "price", "network+price"],
    "optimality": ["network", "price", "network+price"],
    "sudden": ["history", "price+history", "network+history", "network+price+history"],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- io helpers --------------------------------------------------------------------


def _cell(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, date):
        return v.isoformat()
    return str(v)


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    """RFC-4180 CSV with exact float text, ISO dates and empty nulls."""
    import csv

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(frame.columns)
        for row in frame.itertuples(index=False, name=None):
            w.writerow([_cell(v) for v in row])


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for q in sorted(p.iterdir()):
                if q.is_file() and not q.name.endswith(".manifest.json") and q.name != "manifest.json":
                    out[str(q)] = sha256(q)
        elif p.is_file():
            out[str(p)] = sha256(p)
    return out


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, path: Path) -> None:
        payload = {
            "subcommand": self.subcommand,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=1, default=str) + "\n", encoding="utf-8")


def _config_of(args) -> dict:
    skip = {"func", "jobs"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _finish(args, outputs: Sequence[Path], inputs: Sequence = (), manifest_path: Path | None = None) -> None:
    data_inputs = [args.data] if getattr(args, "data", None) else []
    man = RunManifest(
        subcommand=args.command if args.command != "trades" else f"trades {args.action}",
        config=_config_of(args),
        seed=args.seed,
        inputs=_digests([*data_inputs, *[p for p in inputs if p]]),
        outputs={str(p): sha256(p) for p in outputs},
    )
    target = manifest_path or Path(str(outputs[0]) + ".manifest.json")
    man.write(target)


def _load(args) -> Dataset:
    if not args.data:
        raise UsageError("--data is required")
    ds = parse_dataset(args.data, getattr(args, "lexicon", None))
    for w in ds.warnings:
        print(f"netstress: warning: {w}", file=sys.stderr)
    return ds


def _archive(args, ds: Dataset) -> graphs.FeatureArchive:
    if getattr(args, "features", None):
        return graphs.read_archive(args.features, args.alpha)
    return graphs.compute_archive(ds, args.alpha, args.orientation)


def _ints(spec: str) -> list[int]:
    """``0..9`` or ``0,2,4``."""
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in spec.split(",") if v.strip()]


# -- subcommands ---------------------------------------------------------------------------


def cmd_tag_mentions(args) -> list[Path]:
    ds = _load(args)
    tagged = tag_mentions(ds.messages, ds.symbols)
    out = Path(args.output)
    frame = pd.DataFrame(
        [(m.msg_id, m.timestamp.isoformat(), m.sender, m.receiver, " ".join(m.tokens), " ".join(sorted(m.mentions)))
         for m in tagged],
        columns=["msg_id", "timestamp", "sender", "receiver", "tokens", "mentions"],
    )
    write_csv(frame, out)
    return [out]


def cmd_metrics(args) -> list[Path]:
    ds = _load(args)
    arch = graphs.compute_archive(ds, args.alpha, args.orientation).filter(args.min_nodes)
    out = Path(args.output)
    write_csv(arch.frame, out)
    return [out]


def cmd_shocks(args) -> list[Path]:
    ds = _load(args)
    ev = shocks.detect_shocks(ds.bars, args.x, ds.calendar)
    out = Path(args.output)
    write_csv(shocks.shocks_frame(ev), out)
    return [out]


def cmd_curve(args) -> list[Path]:
    ds = _load(args)
    arch = _archive(args, ds).filter(args.min_nodes)
    changes = shocks.price_changes(ds.bars)
    grid = shocks.parse_grid(args.grid)
    parts = []
    for feat in args.feature.split(","):
        c = shocks.aggregation_curve(arch.frame, changes, feat, grid)
        c.insert(0, "feature", feat)
        parts.append(c)
    out = Path(args.output)
    write_csv(pd.concat(parts, ignore_index=True), out)
    return [out]


def cmd_response(args) -> list[Path]:
    ds = _load(args)
    arch = _archive(args, ds).filter(args.min_nodes)
    ev = shocks.detect_shocks(ds.bars, args.x, ds.calendar)
    parts = [shocks.shock_response(arch.frame, ev, feat, ds.calendar, args.horizon, args.band).to_frame()
             for feat in args.feature.split(",")]
    out = Path(args.output)
    write_csv(pd.concat(parts, ignore_index=True), out)
    return [out]


def cmd_lexicon(args) -> list[Path]:
    ds = _load(args)
    lex = ds.lexicon or lexicon.demo_lexicon()
    scores = lexicon.conformance(ds, lex, insiders_only=not args.all_messages)
    out = Path(args.output)
    write_csv(scores, out)
    outs = [out]
    if args.curve_output:
        curves = lexicon.word_pct_curves(scores, shocks.price_changes(ds.bars), shocks.parse_grid(args.grid))
        write_csv(curves, Path(args.curve_output))
        outs.append(Path(args.curve_output))
    return outs


def _regress_tables(ds, frame, changes, features, fe, weekday, with_dw=True):
    tables, dw_frames = [], []
    for feat in features:
        spec = stats.PanelSpec(feat, fixed_effects=fe, weekday_effects=weekday)
        fit = stats.fit_panel(frame, changes, ds.vix, spec, ds.calendar, ds.industry)
        tab = stats.fit_table(fit, feat, fe)
        if with_dw:
            per, summary = stats.dw_per_stock(frame, changes, feat, ds.calendar)
            per.insert(0, "feature", feat)
            dw_frames.append(per)
            extra = [(feat, f"DW {k}", v, None, None, None, "") for k, v in summary.items()]
            tab = pd.DataFrame(tab.values.tolist() + extra, columns=tab.columns)
        tab.insert(1, "fixed_effects", fe)
        tables.append(tab)
    return pd.concat(tables, ignore_index=True), (pd.concat(dw_frames, ignore_index=True) if dw_frames else None)


def cmd_regress(args) -> list[Path]:
    ds = _load(args)
    if not ds.vix:
        raise ValidationError("regression needs vix.csv")
    arch = _archive(args, ds).filter(args.min_nodes)
    changes = shocks.price_changes(ds.bars)
    table, dw = _regress_tables(ds, arch.frame, changes, args.feature.split(","), args.fe, not args.no_weekday)
    out = Path(args.output)
    write_csv(table, out)
    outs = [out]
    if args.dw_output:
        write_csv(dw, Path(args.dw_output))
        outs.append(Path(args.dw_output))
    return outs


def cmd_trades(args) -> list[Path]:
    ds = _load(args)
    if not ds.trades:
        raise ValidationError("dataset has no trades.csv")
    cal = ds.calendar
    out = Path(args.output)
    if args.action == "label":
        labels, _ = trades.label_optimality(ds.trades, ds.bars, cal)
        write_csv(trades.add_loss(labels, ds.bars, args.mark), out)
    elif args.action == "baseline":
        base = trades.random_baseline(ds.trades, ds.bars, args.seed)
        labels, _ = trades.label_optimality(base, ds.bars, cal)
        write_csv(trades.add_loss(labels, ds.bars, args.mark), out)
    else:
        write_csv(_loss_summary(ds, args.seed, args.mark), out)
    return [out]


def _loss_summary(ds, seed, mark) -> pd.DataFrame:
    cal = ds.calendar
    actual, sa = trades.label_optimality(ds.trades, ds.bars, cal)
    base, sb = trades.label_optimality(trades.random_baseline(ds.trades, ds.bars, seed), ds.bars, cal)
    comp = trades.compare_to_baseline(trades.add_loss(actual, ds.bars, mark), trades.add_loss(base, ds.bars, mark))
    comp.update({f"actual_{k}": v for k, v in sa.items() if k in ("labeled", "dropped")})
    comp.update({f"baseline_{k}": v for k, v in sb.items() if k in ("labeled", "dropped")})
    comp.update({"actual_buy_suboptimal_rate": sa["buy_suboptimal_rate"],
                 "actual_sell_suboptimal_rate": sa["sell_suboptimal_rate"]})
    return pd.DataFrame(sorted(comp.items()), columns=["metric", "value"])


def _predict_reports(ds, arch_frame, task, feature_sets, ks, categories, bin_size, bin_unit, seed, jobs,
                     scores=None, week_days=5):
    cal = ds.calendar
    changes = shocks.price_changes(ds.bars)
    book = trades.TradeBook(ds.trades, cal, ds.symbols)
    panel = predict.build_panel(arch_frame, changes, cal, ds.symbols, book.traded)
    if task == "conformance":
        if scores is None:
            scores = lexicon.conformance(ds, ds.lexicon or lexicon.demo_lexicon())
        cats = categories or sorted(scores["category"].unique())
        data = [predict.assemble("conformance", panel, scores=scores, category=c) for c in cats]
    elif task == "optimality":
        labels, _ = trades.label_optimality(ds.trades, ds.bars, cal)
        data = [predict.assemble("optimality", panel, labels=labels, k=k) for k in ks]
    else:
        data = [predict.assemble("sudden", panel, k=k, week_days=week_days) for k in ks]
    origin = cal.days[0] if bin_unit == "calendar" else None
    n_days = (cal.days[-1] - cal.days[0]).days + 1 if origin else len(cal)
    reports = predict.evaluate(data, feature_sets, n_days, bin_size, seed, jobs, origin=origin)
    return predict.reports_frame(reports)


def cmd_predict(args) -> list[Path]:
    ds = _load(args)
    if args.task not in predict.TASKS:
        raise ValidationError(f"unknown task {args.task!r}")
    if args.task != "conformance" and not ds.trades:
        raise ValidationError("dataset has no trades.csv")
    arch = _archive(args, ds).filter(args.min_nodes)
    sets = args.features_sets.split(",") if args.features_sets else SETS[args.task]
    for fs in sets:
        predict.parse_feature_set(fs)
    frame = _predict_reports(ds, arch.frame, args.task, sets, _ints(args.k),
                             args.category.split(",") if args.category else None,
                             args.bin, args.bin_unit, args.seed, args.jobs)
    out = Path(args.output)
    write_csv(frame, out)
    return [out]


def cmd_synth(args) -> list[Path]:
    if args.config:
        cfg = synth.SynthConfig.from_toml(args.config, seed=args.seed)
    else:
        cfg = synth.SynthConfig(**({"seed": args.seed} if args.seed is not None else {}))
    out = Path(args.output)
    synth.generate(cfg, out)
    args.seed = cfg.seed
    return sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")


def cmd_report(args) -> list[Path]:
    """Every stage on one dataset, written to an output directory."""
    ds = _load(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, frame):
        p = out / name
        write_csv(frame, p)
        written.append(p)

    full = graphs.compute_archive(ds, args.alpha, args.orientation)
    arch = full.filter(args.min_nodes)
    put("features.csv", arch.frame)
    changes = shocks.price_changes(ds.bars)
    ev = shocks.detect_shocks(ds.bars, args.x, ds.calendar)
    put("shocks.csv", shocks.shocks_frame(ev))
    grid = shocks.parse_grid(args.grid)
    curves = []
    for feat in CURVE_FEATURES:
        c = shocks.aggregation_curve(arch.frame, changes, feat, grid)
        c.insert(0, "feature", feat)
        curves.append(c)
    put("curves.csv", pd.concat(curves, ignore_index=True))
    if ev:
        put("response.csv", pd.concat([shocks.shock_response(arch.frame, ev, f, ds.calendar, args.horizon,
                                                             args.band).to_frame()
                                       for f in RESPONSE_FEATURES], ignore_index=True))

    lex = ds.lexicon or lexicon.demo_lexicon()
    scores = lexicon.conformance(ds, lex)
    put("conformance.csv", scores)
    put("lexicon_curves.csv", lexicon.word_pct_curves(scores, changes, grid))

    if ds.vix:
        tables, dws = [], []
        for fe in ("stock", "industry") if ds.industry else ("stock",):
            t, dw = _regress_tables(ds, arch.frame, changes, REPORT_FEATURES, fe, True, with_dw=fe == "stock")
            tables.append(t)
            if dw is not None:
                dws.append(dw)
        put("regress.csv", pd.concat(tables, ignore_index=True))
        put("durbin_watson.csv", pd.concat(dws, ignore_index=True))

    ks = _ints(args.k)
    cats = args.category.split(",") if args.category else None
    if ds.trades:
        labels, _ = trades.label_optimality(ds.trades, ds.bars, ds.calendar)
        put("trade_labels.csv", trades.add_loss(labels, ds.bars))
        base = trades.random_baseline(ds.trades, ds.bars, args.seed)
        blabels, _ = trades.label_optimality(base, ds.bars, ds.calendar)
        put("baseline_labels.csv", trades.add_loss(blabels, ds.bars))
        put("loss.csv", _loss_summary(ds, args.seed, "close"))

    preds = [_predict_reports(ds, arch.frame, "conformance", SETS["conformance"], ks, cats, args.bin,
                              args.bin_unit, args.seed, args.jobs, scores=scores)]
    if ds.trades:
        for task in ("optimality", "sudden"):
            preds.append(_predict_reports(ds, arch.frame, task, SETS[task], ks, None, args.bin, args.bin_unit,
                                          args.seed, args.jobs))
    frame = pd.concat(preds, ignore_index=True)
    put("predict.csv", frame)
    summary = frame.drop_duplicates(["task", "group", "feature_set"])[
        ["task", "group", "feature_set", "pooled_accuracy"]]
    put("predict_summary.csv", summary.reset_index(drop=True))
    return written


# -- parser ----------------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=7, help="random seed (default 7)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: all cores)")
    p.add_argument("--config", help="TOML file; table [<subcommand>] supplies option defaults")
    p.add_argument("--data", help="dataset directory")
    return p


def _graph_opts(p, features=True):
    p.add_argument("--alpha", type=float, default=0.1, help="top-partner fraction for tie strength")
    p.add_argument("--orientation", choices=graphs.ORIENTATIONS, default="incidence")
    p.add_argument("--min-nodes", type=int, default=2)
    if features:
        p.add_argument("--features", help="precomputed features.csv (from `metrics`)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netstress", description="Insider-network analysis of stock-day communication graphs.")
    parser.add_argument("--version", action="version", version=f"netstress {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        # a fresh parent per subcommand so set_defaults never leaks between them
        p = sub.add_parser(name, parents=[_common()], help=help_)
        p.set_defaults(func=func)
        p.add_argument("-o", "--output", required=True)
        return p

    add("tag-mentions", cmd_tag_mentions, "fill the mentions column by exact symbol-token match")

    p = add("metrics", cmd_metrics, "graph features per (symbol, day)")
    _graph_opts(p, features=False)

    p = add("shocks", cmd_shocks, "detect x-shocks")
    p.add_argument("--x", type=float, default=0.05)

    p = add("curve", cmd_curve, "feature means against price-change thresholds")
    _graph_opts(p)
    p.add_argument("--feature", default="clustering", help="feature name(s), comma separated")
    p.add_argument("--grid", default="-0.1:0.1:0.01")

    p = add("response", cmd_response, "feature trajectory after shocks")
    _graph_opts(p)
    p.add_argument("--feature", default="strength", help="feature name(s), comma separated")
    p.add_argument("--x", type=float, default=0.05)
    p.add_argument("--horizon", type=int, default=7)
    p.add_argument("--band", type=float, default=0.25)

    p = add("lexicon", cmd_lexicon, "daily lexicon-category conformance")
    p.add_argument("--lexicon", help="lexicon file (category,pattern); default: dataset's, else bundled demo")
    p.add_argument("--all-messages", action="store_true", help="count border messages too")
    p.add_argument("--curve-output", help="also write word-percentage curves against price change here")
    p.add_argument("--grid", default="-0.1:0.1:0.01")

    p = add("regress", cmd_regress, "fixed-effects OLS and per-stock Durbin-Watson")
    _graph_opts(p)
    p.add_argument("--fe", choices=["stock", "industry", "none"], default="stock")
    p.add_argument("--feature", default="nodes,clustering,border,strength", help="feature name(s), comma separated")
    p.add_argument("--no-weekday", action="store_true", help="drop day-of-week dummies")
    p.add_argument("--dw-output", help="also write per-stock Durbin-Watson rows here")

    p = add("trades", cmd_trades, "trade optimality labels, random baseline and losses")
    p.add_argument("action", choices=["label", "baseline", "loss"])
    p.add_argument("--mark", choices=["open", "close"], default="close", help="next-day price used for losses")

    p = add("predict", cmd_predict, "time-binned classification tasks")
    _graph_opts(p)
    p.add_argument("--task", required=True, choices=list(predict.TASKS))
    p.add_argument("--feature-sets", dest="features_sets",
                   help="comma-separated feature sets, e.g. network,price,network+price")
    p.add_argument("--k", default="0..9", help="k range for optimality/sudden, e.g. 0..9 or 0,3,6")
    p.add_argument("--category", help="lexicon categories for conformance (default: all)")
    p.add_argument("--bin", type=int, default=100)
    p.add_argument("--bin-unit", choices=["trading", "calendar"], default="trading")

    p = add("synth", cmd_synth, "generate a synthetic corpus")
    p.set_defaults(seed=None)

    p = add("report", cmd_report, "run every stage and write all outputs to a directory")
    _graph_opts(p, features=False)
    p.add_argument("--x", type=float, default=0.05)
    p.add_argument("--grid", default="-0.1:0.1:0.01")
    p.add_argument("--horizon", type=int, default=7)
    p.add_argument("--band", type=float, default=0.25)
    p.add_argument("--k", default="0..9")
    p.add_argument("--category", default="posemo,negemo,cogmech",
                   help="lexicon categories for the conformance task")
    p.add_argument("--bin", type=int, default=100)
    p.add_argument("--bin-unit", choices=["trading", "calendar"], default="trading")
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config and args.command != "synth":
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{args.config}: {exc}") from None
        section = {k.replace("-", "_"): v for k, v in raw.get(args.command, {}).items()}
        known = set(vars(args))
        bad = sorted(set(section) - known)
        if bad:
            raise ValidationError(f"{args.config}: unknown options for {args.command}: {', '.join(bad)}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**section)
        args = parser.parse_args(argv)
    return args


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        outputs = args.func(args)
        if args.command in ("synth", "report"):
            _finish(args, outputs, manifest_path=Path(args.output) / "manifest.json")
        else:
            _finish(args, outputs, inputs=[getattr(args, "features", None), getattr(args, "lexicon", None)])
    except UsageError as exc:
        print(f"netstress: usage-error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"netstress: validation-error: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_VALIDATION
    except NetstressError as exc:
        print(f"netstress: runtime-error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"netstress: runtime-error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def main() -> None:
    sys.exit(run())
