"""Command-line entry point.

Subcommands: gen-data, mine, eval, sweep, backtest, report. Every command
takes ``--config run.toml`` plus repeatable ``--set section.key=value``
overrides; all randomness flows from the config seed. Relative output paths
land under $ALPHAMINE_OUT (default: current directory). Exit codes: 0 ok,
1 runtime/config error (single-line ``error: Kind: message`` on stderr),
2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import backtest as bt
from . import pipeline as pl
from .config import apply_overrides, dump_config, load_config
from .errors import AlphamineError
from .panel import compute_ic, load_csv, panel_to_csv, standardize_daily, synth_panel
from .pool import AlphaPool


def _out_path(path: str) -> str:
    root = os.environ.get("ALPHAMINE_OUT", "")
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _load(args) -> pl.RunConfig:
    cfg = load_config(args.config) if args.config else pl.RunConfig()
    return apply_overrides(cfg, args.set or [])


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")


def _pool_context(cfg: pl.RunConfig, pool_path: str):
    panel = pl.build_panel(cfg)
    split = pl.build_split(cfg, panel)
    target = panel.forward_returns(cfg.horizon)
    train_mask = split.mask(panel.dates, "train")
    pool = AlphaPool.load(pool_path, panel, target, train_mask, fit_config=cfg.fit_config())
    return panel, split, target, pool


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    panel = synth_panel(cfg.n_stocks, cfg.n_days, cfg.data_seed,
                        planted=cfg.planted or None, planted_weight=cfg.planted_weight)
    out = _out_path(args.out)
    with open(out, "w") as fh:
        fh.write(panel_to_csv(panel))
    info = {"out": out, "stocks": cfg.n_stocks, "days": cfg.n_days}
    if cfg.planted:
        from .expr import evaluate, parse

        alpha = standardize_daily(evaluate(parse(cfg.planted), panel), panel.tradable)
        info["planted_ic"] = compute_ic(alpha, panel.returns5, panel.tradable).ic
    print(json.dumps(info))
    return 0


def cmd_mine(args) -> int:
    cfg = _load(args)
    out_dir = _out_path(args.out)
    os.makedirs(out_dir, exist_ok=True)
    if args.resume:
        result = pl.resume(cfg)
    else:
        result = pl.run(cfg)
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write(result.report_csv())
    result.pool.save(os.path.join(out_dir, "pool.json"))
    result.policy.save(os.path.join(out_dir, "policy.npz"))
    with open(os.path.join(out_dir, "config_used.toml"), "w") as fh:
        fh.write(dump_config(cfg))
    print(json.dumps({
        "out": out_dir,
        "iterations": len(result.report),
        "pool_size": result.pool.size,
        "best_train_ic": result.best_train_ic,
    }))
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    panel, split, target, pool = _pool_context(cfg, args.pool)
    mask = split.mask(panel.dates, args.split)
    report = compute_ic(pool.composite(), target, panel.tradable, mask, dates=panel.dates)
    if args.out:
        with open(_out_path(args.out), "w") as fh:
            fh.write(report.to_csv())
    print(json.dumps({"split": args.split, **report.summary()}))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    levels = [float(x) for x in args.levels.split(",") if x.strip()]
    rows = pl.quantile_sweep(cfg, levels)
    csv_text = pl.sweep_csv(rows)
    if args.out:
        with open(_out_path(args.out), "w") as fh:
            fh.write(csv_text)
    sys.stdout.write(csv_text)
    return 0


def cmd_backtest(args) -> int:
    cfg = _load(args)
    panel, split, target, pool = _pool_context(cfg, args.pool)
    mask = split.mask(panel.dates, args.split)
    k = args.k if args.k is not None else cfg.backtest_k
    strat = bt.StrategyConfig(k, cfg.rebalance_every, cfg.cost_bps)
    curve = bt.run_backtest(pool.composite(), panel, strat, mask)
    if args.out:
        with open(_out_path(args.out), "w") as fh:
            fh.write(curve.to_csv())
    if args.holdings:
        with open(_out_path(args.holdings), "w") as fh:
            fh.write(curve.holdings_csv())
    print(json.dumps({"split": args.split, "k": k,
                      "cumulative_return": bt.cumulative_return(curve)}))
    return 0


def cmd_report(args) -> int:
    cfg = _load(args)
    if args.dump_config:
        with open(_out_path(args.dump_config), "w") as fh:
            fh.write(dump_config(cfg))
        print(json.dumps({"dumped": args.dump_config}))
        return 0
    if args.run_dir:
        path = os.path.join(args.run_dir, "report.csv")
        with open(path) as fh:
            lines = fh.read().strip().splitlines()
        header, rows = lines[0].split(","), [ln.split(",") for ln in lines[1:]]
        best = max((float(r[1]) for r in rows if r[1] != "nan"), default=float("nan"))
        print(json.dumps({"iterations": len(rows), "best_train_ic": best,
                          "columns": header}))
        return 0
    raise AlphamineError("report needs --dump-config or --run-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alphamine",
        description="Mine synergistic formulaic alphas with risk-seeking tree search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic panel CSV")
    _add_common(p)
    p.add_argument("--out", default="panel.csv")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("mine", help="run the mining pipeline")
    _add_common(p)
    p.add_argument("--out", default="run")
    p.add_argument("--resume", action="store_true", help="continue from output.checkpoint_dir")
    p.set_defaults(fn=cmd_mine)

    p = sub.add_parser("eval", help="IC/ICIR/RankIC of a pool checkpoint on a split")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--out", help="per-day metric CSV")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="quantile-level sweep")
    _add_common(p)
    p.add_argument("--levels", default="0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("backtest", help="top-k strategy on a pool checkpoint")
    _add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--k", type=int)
    p.add_argument("--out", help="equity curve CSV")
    p.add_argument("--holdings", help="holdings log CSV")
    p.set_defaults(fn=cmd_backtest)

    p = sub.add_parser("report", help="summarize a run or dump the effective config")
    _add_common(p)
    p.add_argument("--run-dir")
    p.add_argument("--dump-config", metavar="PATH")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AlphamineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
