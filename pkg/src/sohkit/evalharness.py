"""Experiment grid: per-cell prediction, feature-count sweeps, cross-cell
transfer, and training-cycle sweeps, with plot-ready CSV output.

Every run follows the same no-leakage discipline: feature selection,
standardization, and model fitting see only cycles at or before the
run's train_end. Runs are recorded with their full predicted/actual
series so every reported RMSE can be recomputed from the report alone,
and reports serialize deterministically (fixed ordering, shortest
round-trip floats) so identical configs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .features import FEATURE_IDS, FeatureTable, extract_feature_table
from .ingest import CellDataset, SohSeries, compute_soh
from .select import SelectionReport, global_shap_ranking, rank_by_pcc
from .dlinear import (
    DEFAULT_LOOKBACK,
    DEFAULT_MA_WINDOW,
    DEFAULT_RIDGE,
    build_supervised,
    fit,
    forecast_series,
)

# Reference top-3 lists for the ranking-agreement soft check (logged,
# never asserted: rankings depend on unreported modeling choices).
REFERENCE_TOP3 = {
    "pcc": {
        "B0005": ["F10", "F12", "F13"],
        "B0006": ["F3", "F18", "F20"],
        "B0007": ["F7", "F8", "F18"],
        "B0018": ["F7", "F8", "F20"],
    },
    "shap": {
        "B0005": ["F2", "F10", "F11"],
        "B0006": ["F2", "F11", "F18"],
        "B0007": ["F2", "F11", "F18"],
        "B0018": ["F2", "F11", "F18"],
    },
}


def rmse(pred: np.ndarray, actual: np.ndarray) -> float:
    """Root-mean-square error between two equal-length arrays."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValidationError(f"length mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValidationError("empty arrays")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid definition plus model defaults; serializes to/from JSON."""

    cells: list[str]
    methods: list[str] = field(default_factory=lambda: ["all", "pcc", "shap"])
    ks: list[int] = field(default_factory=lambda: [3])
    train_ends: list[int] = field(default_factory=lambda: [70])
    lookback: int = DEFAULT_LOOKBACK
    horizon: int = 1
    ma_window: int = DEFAULT_MA_WINDOW
    ridge: float = DEFAULT_RIDGE
    individual: bool = False
    seed: int = 42
    shap_n_perm: int = 200
    shap_estimator: str = "exact"
    transfers: list[dict] = field(default_factory=list)
    sweep_train_ends: list[int] = field(default_factory=list)

    def validate(self) -> None:
        for m in self.methods:
            if m not in ("all", "pcc", "shap"):
                raise ValidationError(f"unknown method {m!r}")
        for k in self.ks:
            if not 1 <= k <= 20:
                raise ValidationError(f"k must be in [1, 20], got {k}")
        floor = self.lookback + self.horizon
        for te in list(self.train_ends) + list(self.sweep_train_ends):
            if te < floor:
                raise ValidationError(f"train_end {te} < lookback + horizon = {floor}")
        for tr in self.transfers:
            if tr["source"] in tr["targets"]:
                raise ValidationError(f"transfer source {tr['source']} cannot be a target")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        return ExperimentConfig(**d)

    @staticmethod
    def from_json(path: str | Path) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentReport:
    """Per-run records plus a config echo; RMSEs recomputable from the
    stored series."""

    config: dict
    runs: list[dict] = field(default_factory=list)
    toolkit_version: str = __version__

    def to_json(self) -> str:
        runs = sorted(self.runs, key=_run_key)
        payload = {
            "toolkit_version": self.toolkit_version,
            "config": self.config,
            "runs": runs,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @staticmethod
    def from_json(text: str) -> "ExperimentReport":
        d = json.loads(text)
        return ExperimentReport(
            config=d["config"], runs=d["runs"], toolkit_version=d["toolkit_version"]
        )

    def verify_self_consistency(self, tol: float = 1e-12) -> None:
        """Recompute every stored RMSE from its series; raise on drift."""
        for run in self.runs:
            if run["status"] != "ok":
                continue
            again = rmse(np.array(run["predicted"]), np.array(run["actual"]))
            if abs(again - run["rmse"]) > tol:
                raise ValidationError(
                    f"run {_run_key(run)}: stored rmse {run['rmse']} != recomputed {again}"
                )


def _run_key(run: dict) -> tuple:
    return (
        run.get("kind", ""),
        run.get("source", ""),
        run.get("cell", ""),
        run.get("method", ""),
        run.get("k") or 0,
        run.get("train_end") or 0,
    )


def slice_table(t: FeatureTable, mask: np.ndarray) -> FeatureTable:
    return FeatureTable(
        cycle_index=t.cycle_index[mask],
        values=t.values[mask],
        feature_ids=list(t.feature_ids),
    )


def slice_soh(s: SohSeries, mask: np.ndarray) -> SohSeries:
    return SohSeries(
        cycle_index=s.cycle_index[mask], soh=s.soh[mask], initial_capacity=s.initial_capacity
    )


def _select_channels(
    table: FeatureTable, soh: SohSeries, method: str, k: int, train_end: int,
    cfg: ExperimentConfig,
) -> tuple[list[str], SelectionReport | None]:
    if method == "all":
        return list(table.feature_ids), None
    mask = table.cycle_index <= train_end
    t_train = slice_table(table, mask)
    s_train = slice_soh(soh, mask)
    if method == "pcc":
        rep = rank_by_pcc(t_train, s_train, k)
    elif method == "shap":
        rep = global_shap_ranking(
            t_train, s_train, k,
            ridge=cfg.ridge, seed=cfg.seed,
            n_perm=cfg.shap_n_perm, estimator=cfg.shap_estimator,
        )
    else:
        raise ValidationError(f"unknown method {method!r}")
    return list(rep.selected), rep


def _fit_and_score(
    table: FeatureTable, soh: SohSeries, channels: list[str], train_end: int,
    cfg: ExperimentConfig,
) -> dict:
    restricted = table.restrict(channels)
    train, test = build_supervised(restricted, soh, cfg.lookback, cfg.horizon, train_end)
    model = fit(train, ma_window=cfg.ma_window, individual=cfg.individual, ridge=cfg.ridge)
    pred = forecast_series(model, test)
    pos = {int(c): i for i, c in enumerate(soh.cycle_index)}
    actual = np.array([soh.soh[pos[int(c)]] for c in pred.cycle_index])
    return {
        "cycles": [int(c) for c in pred.cycle_index],
        "predicted": [float(v) for v in pred.soh],
        "actual": [float(v) for v in actual],
        "rmse": rmse(pred.soh, actual),
        "n_train_windows": len(train),
    }


def _run_one(
    cell: str, table: FeatureTable, soh: SohSeries, method: str, k: int,
    train_end: int, cfg: ExperimentConfig, kind: str = "grid",
    channels: list[str] | None = None, source: str = "",
) -> dict:
    run = {
        "kind": kind,
        "cell": cell,
        "method": method,
        "k": k if method != "all" else None,
        "train_end": train_end,
        "seed": cfg.seed,
        "source": source,
    }
    try:
        if channels is None:
            channels, sel = _select_channels(table, soh, method, k, train_end, cfg)
            if sel is not None:
                run["scores"] = {f: float(sel.scores[f]) for f in sel.ranks}
                run["ranks"] = list(sel.ranks)
        run["selected"] = list(channels)
        run.update(_fit_and_score(table, soh, channels, train_end, cfg))
        run["status"] = "ok"
    except ValidationError as exc:
        run["status"] = "error"
        run["error"] = str(exc)
    return run


def _features_cache(datasets: dict[str, CellDataset]) -> dict[str, tuple[FeatureTable, SohSeries]]:
    out = {}
    for cell in sorted(datasets):
        ds = datasets[cell]
        out[cell] = (extract_feature_table(ds), compute_soh(ds))
    return out


def run_experiment(cfg: ExperimentConfig, datasets: dict[str, CellDataset]) -> ExperimentReport:
    """Run the full grid (cells x methods x ks x train_ends), plus any
    configured transfers and training-cycle sweeps.

    Per-run failures are recorded as error runs; the grid proceeds.
    """
    cfg.validate()
    missing = [c for c in cfg.cells if c not in datasets]
    if missing:
        raise ValidationError(f"no dataset for cell(s): {', '.join(sorted(set(missing)))}")
    cache = _features_cache({c: datasets[c] for c in cfg.cells})

    report = ExperimentReport(config=cfg.to_dict())
    for cell in sorted(cfg.cells):
        table, soh = cache[cell]
        for method in cfg.methods:
            ks = cfg.ks if method != "all" else [cfg.ks[0]]
            for k in ks:
                for train_end in cfg.train_ends:
                    report.runs.append(
                        _run_one(cell, table, soh, method, k, train_end, cfg)
                    )

    for tr in cfg.transfers:
        report.runs.extend(
            _transfer_runs(
                tr["source"], tr["targets"], tr.get("method", "shap"),
                tr.get("k", 3), tr.get("train_end", cfg.train_ends[0]),
                cfg, datasets, cache,
            )
        )

    if cfg.sweep_train_ends:
        for cell in sorted(cfg.cells):
            table, soh = cache[cell]
            for train_end in cfg.sweep_train_ends:
                for method in ("all", "pcc", "shap"):
                    report.runs.append(
                        _run_one(
                            cell, table, soh, method, cfg.ks[0], train_end, cfg,
                            kind="sweep",
                        )
                    )

    report.runs.sort(key=_run_key)
    return report


def _transfer_runs(source, targets, method, k, train_end, cfg, datasets, cache):
    if source in targets:
        raise ValidationError(f"transfer source {source} cannot be a target")
    for cell in [source] + list(targets):
        if cell not in cache:
            if cell not in datasets:
                raise ValidationError(f"no dataset for cell {cell}")
            ds = datasets[cell]
            cache[cell] = (extract_feature_table(ds), compute_soh(ds))
    s_table, s_soh = cache[source]
    channels, sel = _select_channels(s_table, s_soh, method, k, train_end, cfg)
    runs = []
    for target in sorted(targets):
        t_table, t_soh = cache[target]
        run = _run_one(
            target, t_table, t_soh, method, k, train_end, cfg,
            kind="transfer", channels=list(channels), source=source,
        )
        if sel is not None:
            run["scores"] = {f: float(sel.scores[f]) for f in sel.ranks}
        runs.append(run)
    return runs


def cross_cell_transfer(
    source: str,
    targets: list[str],
    method: str,
    k: int,
    train_end: int,
    datasets: dict[str, CellDataset],
    cfg: ExperimentConfig | None = None,
) -> ExperimentReport:
    """Select features on the source cell's training slice, then train and
    evaluate each target cell restricted to that subset."""
    if cfg is None:
        cfg = ExperimentConfig(cells=sorted({source, *targets}))
    cache = {}
    runs = _transfer_runs(source, targets, method, k, train_end, cfg, datasets, cache)
    report = ExperimentReport(config=cfg.to_dict(), runs=runs)
    report.runs.sort(key=_run_key)
    return report


def training_cycle_sweep(
    cell: str,
    train_ends: list[int],
    methods: list[str],
    datasets: dict[str, CellDataset],
    cfg: ExperimentConfig | None = None,
    k: int = 3,
) -> ExperimentReport:
    """One run per (train_end, method); runs below the minimum training
    length are recorded as errors and the sweep continues."""
    if cfg is None:
        cfg = ExperimentConfig(cells=[cell])
    ds = datasets[cell]
    table, soh = extract_feature_table(ds), compute_soh(ds)
    report = ExperimentReport(config=cfg.to_dict())
    for train_end in train_ends:
        for method in methods:
            report.runs.append(
                _run_one(cell, table, soh, method, k, train_end, cfg, kind="sweep")
            )
    report.runs.sort(key=_run_key)
    return report


def ranking_agreement(
    selections: dict[str, dict[str, list[str]]], reference: dict = REFERENCE_TOP3
) -> dict[str, dict[str, int]]:
    """Overlap counts between computed top-3 lists and the reference
    lists, per method and cell. Logged by callers, never asserted."""
    out: dict[str, dict[str, int]] = {}
    for method, per_cell in selections.items():
        ref_m = reference.get(method, {})
        out[method] = {}
        for cell, top in per_cell.items():
            ref = ref_m.get(cell)
            if ref is None:
                continue
            out[method][cell] = len(set(top[:3]) & set(ref))
    return out


def emit_plot_data(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write one CSV per figure-equivalent plus a JSON manifest.

    Emits predicted-vs-actual series per run, per-feature score bars for
    runs that carry selection scores, RMSE-vs-k and RMSE-vs-train_end
    summaries, and a transfer summary when transfer runs exist.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out_dir}: {exc}") from exc
    cfg_hash = hashlib.sha256(
        json.dumps(report.config, sort_keys=True).encode()
    ).hexdigest()[:16]

    written: list[tuple[Path, str]] = []

    def emit(name: str, kind: str, header: list[str], rows: list[list]) -> None:
        path = out_dir / name
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(str(x) for x in row) + "\n")
        except OSError as exc:
            raise ValidationError(f"cannot write {path}: {exc}") from exc
        written.append((path, kind))

    ok_runs = [r for r in sorted(report.runs, key=_run_key) if r["status"] == "ok"]

    for run in ok_runs:
        tag = _run_tag(run)
        emit(
            f"predictions_{tag}.csv",
            "predicted_vs_actual",
            ["cycle", "actual_soh", "predicted_soh"],
            [
                [c, repr(a), repr(p)]
                for c, a, p in zip(run["cycles"], run["actual"], run["predicted"])
            ],
        )
        if "scores" in run:
            emit(
                f"feature_scores_{tag}.csv",
                "feature_scores",
                ["feature_id", "score"],
                [[f, repr(run["scores"][f])] for f in FEATURE_IDS if f in run["scores"]],
            )

    by_k: dict[tuple, list] = {}
    by_te: dict[tuple, list] = {}
    transfer_rows = []
    for run in ok_runs:
        if run["kind"] == "transfer":
            transfer_rows.append(
                [run["source"], run["cell"], run["method"], run["k"],
                 run["train_end"], repr(run["rmse"])]
            )
            continue
        if run["k"] is not None:
            by_k.setdefault((run["cell"], run["method"], run["train_end"]), []).append(
                (run["k"], run["rmse"])
            )
        by_te.setdefault((run["cell"], run["method"], run["k"]), []).append(
            (run["train_end"], run["rmse"])
        )

    for (cell, method, te), vals in sorted(by_k.items()):
        if len(vals) > 1:
            emit(
                f"rmse_vs_k_{cell}_{method}_t{te}.csv",
                "rmse_vs_k",
                ["k", "rmse"],
                [[k, repr(v)] for k, v in sorted(vals)],
            )
    for (cell, method, k), vals in sorted(by_te.items(), key=str):
        if len(vals) > 1:
            emit(
                f"rmse_vs_train_end_{cell}_{method}_k{k}.csv",
                "rmse_vs_train_end",
                ["train_end", "rmse"],
                [[te, repr(v)] for te, v in sorted(vals)],
            )
    if transfer_rows:
        emit(
            "transfer_rmse.csv",
            "transfer",
            ["source", "target", "method", "k", "train_end", "rmse"],
            transfer_rows,
        )

    manifest = {
        "config_hash": cfg_hash,
        "toolkit_version": report.toolkit_version,
        "files": [
            {"path": p.name, "kind": kind, "config_hash": cfg_hash} for p, kind in written
        ],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return [p for p, _ in written] + [manifest_path]


def _run_tag(run: dict) -> str:
    parts = [run["cell"], run["method"]]
    if run["k"] is not None:
        parts.append(f"k{run['k']}")
    parts.append(f"t{run['train_end']}")
    if run["kind"] == "transfer":
        parts.insert(0, f"from_{run['source']}")
    return "_".join(parts)
