"""Command-line front door.

Subcommands: extract, select, fit, predict, experiment. Exit codes:
0 success, 1 validation failure (bad flags, bad inputs, broken
preconditions), 2 runtime error. The default output root for experiment
runs can be overridden with the SOH_RUN_DIR environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .features import FEATURE_IDS, extract_feature_table, load_feature_csv, save_feature_csv
from .ingest import compute_soh, load_cell_csv
from .select import SelectionReport, global_shap_ranking, rank_by_pcc
from .dlinear import DLinearModel, build_supervised, fit, forecast_series
from .evalharness import ExperimentConfig, emit_plot_data, run_experiment
from .synth import TWIN_PRESETS, make_cell

DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="sohkit", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    px = sub.add_parser("extract", help="compute per-cycle features from a cell CSV")
    px.add_argument("cell_csv")
    px.add_argument("-o", "--output", required=True, help="features CSV to write")

    ps = sub.add_parser("select", help="rank features against SOH and pick the top k")
    ps.add_argument("features_csv")
    ps.add_argument("--method", choices=["pcc", "shap"], required=True)
    ps.add_argument("--k", type=int, default=3)
    ps.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ps.add_argument("--train-end", type=int, default=None,
                    help="use only cycles <= this for ranking (default: all rows)")
    ps.add_argument("-o", "--output", required=True, help="report JSON to write")

    pf = sub.add_parser("fit", help="fit the forecaster on a features CSV")
    pf.add_argument("features_csv")
    pf.add_argument("--train-end", type=int, required=True)
    pf.add_argument("--features", default=None,
                    help="comma-separated feature ids, e.g. F2,F11,F18")
    pf.add_argument("--selection", default=None, help="selection report JSON")
    pf.add_argument("--lookback", type=int, default=16)
    pf.add_argument("--horizon", type=int, default=1)
    pf.add_argument("--ma-window", type=int, default=5)
    pf.add_argument("--ridge", type=float, default=1e-3)
    pf.add_argument("--individual", action="store_true")
    pf.add_argument("--seed", type=int, default=DEFAULT_SEED)
    pf.add_argument("-o", "--output", required=True, help="model JSON to write")

    pp = sub.add_parser("predict", help="predict SOH for every coverable cycle")
    pp.add_argument("model_json")
    pp.add_argument("features_csv")
    pp.add_argument("-o", "--output", required=True, help="prediction CSV to write")

    pe = sub.add_parser("experiment", help="run a full experiment grid from a config")
    pe.add_argument("config_json")
    pe.add_argument("-o", "--output", default=None,
                    help="run directory (default: $SOH_RUN_DIR/<config-hash>)")
    return p


def _cmd_extract(args) -> int:
    ds = load_cell_csv(args.cell_csv)
    table = extract_feature_table(ds)
    soh = compute_soh(ds)
    save_feature_csv(table, soh, args.output)
    print(f"wrote {len(table)} cycles x {len(table.feature_ids)} features to {args.output}")
    return 0


def _cmd_select(args) -> int:
    table, soh = load_feature_csv(args.features_csv)
    if args.train_end is not None:
        mask = table.cycle_index <= args.train_end
        from .evalharness import slice_soh, slice_table
        table, soh = slice_table(table, mask), slice_soh(soh, mask)
    if args.method == "pcc":
        report = rank_by_pcc(table, soh, args.k)
    else:
        report = global_shap_ranking(table, soh, args.k, seed=args.seed)
    report.save(args.output)
    print(f"method={args.method} seed={args.seed} selected={','.join(report.selected)}")
    return 0


def _cmd_fit(args) -> int:
    table, soh = load_feature_csv(args.features_csv)
    if args.features and args.selection:
        raise ValidationError("pass --features or --selection, not both")
    if args.features:
        channels = [f.strip() for f in args.features.split(",") if f.strip()]
        unknown = [f for f in channels if f not in table.feature_ids]
        if unknown:
            raise ValidationError(f"unknown feature id(s): {', '.join(unknown)}")
    elif args.selection:
        report = SelectionReport.from_json(Path(args.selection).read_text(encoding="utf-8"))
        channels = list(report.selected)
    else:
        channels = list(table.feature_ids)
    train, _ = build_supervised(
        table.restrict(channels), soh, args.lookback, args.horizon, args.train_end
    )
    model = fit(train, ma_window=args.ma_window, individual=args.individual, ridge=args.ridge)
    model.save(args.output)
    print(
        f"fitted on {len(train)} windows (seed={args.seed}, channels={','.join(channels)}); "
        f"wrote {args.output}"
    )
    return 0


def _cmd_predict(args) -> int:
    model = DLinearModel.load(args.model_json)
    table, soh = load_feature_csv(args.features_csv)
    restricted = table.restrict(model.channels)
    Xs = (restricted.values - model.std_mean) / model.std_scale
    Xs = np.nan_to_num(Xs, nan=0.0)
    L, H = model.lookback, model.horizon
    if len(table) < L + H:
        raise ValidationError(f"need at least {L + H} cycles, got {len(table)}")
    anchors = np.arange(L, len(table) - H + 1)
    by_cycle: dict[int, float] = {}
    for a in anchors:
        pred = model.predict(Xs[a - L : a][None])[0]
        for h in range(H):
            by_cycle[int(table.cycle_index[a + h])] = float(pred[h])
    pos = {int(c): i for i, c in enumerate(table.cycle_index)}
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("cycle,predicted_soh,actual_soh\n")
        for c in sorted(by_cycle):
            fh.write(f"{c},{by_cycle[c]!r},{float(soh.soh[pos[c]])!r}\n")
    print(f"wrote {len(by_cycle)} predictions to {args.output}")
    return 0


def _load_experiment_datasets(raw_cfg: dict) -> dict:
    data = raw_cfg.pop("data", None)
    if not data:
        raise ValidationError("experiment config needs a 'data' map of cell id -> CSV path")
    datasets = {}
    for cell, path in data.items():
        if path == "synthetic":
            datasets[cell] = make_cell(cell, **TWIN_PRESETS.get(cell, {}))
        else:
            datasets[cell] = load_cell_csv(path)
    return datasets


def _cmd_experiment(args) -> int:
    raw = json.loads(Path(args.config_json).read_text(encoding="utf-8"))
    datasets = _load_experiment_datasets(raw)
    cfg = ExperimentConfig.from_dict(raw)
    report = run_experiment(cfg, datasets)
    out = args.output
    if out is None:
        out = Path(os.environ.get("SOH_RUN_DIR", "runs")) / cfg.config_hash()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    emit_plot_data(report, out)
    ok = sum(1 for r in report.runs if r["status"] == "ok")
    print(f"seed={cfg.seed} runs={len(report.runs)} ok={ok} "
          f"errors={len(report.runs) - ok} -> {out}")
    return 0


_COMMANDS = {
    "extract": _cmd_extract,
    "select": _cmd_select,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "experiment": _cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
