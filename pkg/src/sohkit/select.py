"""Feature ranking and selection.

Two rankers over a FeatureTable aligned with an SOH series:

- Pearson correlation filter: score each feature by its signed
  correlation with SOH, rank by |r|.
- Shapley attribution: fit a ridge-regularized linear surrogate on
  standardized features, attribute each per-cycle prediction to the
  features (exact closed form under the linear model with mean
  imputation, or a permutation Monte-Carlo estimator for black-box
  predictors), and score each feature by its mean |phi| over cycles.

Degenerate (constant) feature columns are excluded from the surrogate,
scored 0, and ranked last.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .features import FeatureTable
from .ingest import SohSeries

DEFAULT_RIDGE = 1e-3
DEFAULT_N_PERM = 200


def pearson_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson r between two equal-length arrays.

    r = sum(dx*dy) / sqrt(sum(dx^2) * sum(dy^2)) with deviations from the
    sample means. Returns NaN when either input has zero variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValidationError(f"need >= 2 samples, got {x.size}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        # constant input; deviations would be pure mean-rounding noise
        return float("nan")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if denom == 0.0:
        return float("nan")
    r = float(np.dot(dx, dy) / denom)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class SelectionReport:
    """Per-feature scores, ranking, and the chosen top-k subset."""

    method: str  # 'pcc' or 'shap'
    scores: dict[str, float]
    ranks: list[str]  # all feature ids, by descending |score|
    selected: list[str]  # first k of ranks
    k: int
    config: dict = field(default_factory=dict)
    degenerate: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "method": self.method,
            "k": self.k,
            "scores": {f: self.scores[f] for f in sorted(self.scores, key=_feature_order)},
            "ranks": self.ranks,
            "selected": self.selected,
            "degenerate": self.degenerate,
            "config": self.config,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SelectionReport":
        d = json.loads(text)
        return SelectionReport(
            method=d["method"],
            scores=d["scores"],
            ranks=d["ranks"],
            selected=d["selected"],
            k=d["k"],
            config=d.get("config", {}),
            degenerate=d.get("degenerate", []),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def save_csv(self, path: str | Path) -> None:
        """CSV mirror for plotting: feature_id,score,rank,selected."""
        rank_of = {f: i + 1 for i, f in enumerate(self.ranks)}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature_id", "score", "rank", "selected"])
            for f in sorted(self.scores, key=_feature_order):
                writer.writerow(
                    [f, repr(float(self.scores[f])), rank_of[f], int(f in self.selected)]
                )


def _feature_order(fid: str) -> int:
    return int(fid[1:])


def _rank_ids(scores: dict[str, float], degenerate: set[str]) -> list[str]:
    # Descending |score|; degenerate columns last; ties by ascending index.
    return sorted(
        scores,
        key=lambda f: (f in degenerate, -abs(scores[f]), _feature_order(f)),
    )


def _check_alignment(t: FeatureTable, s: SohSeries) -> None:
    if not np.array_equal(t.cycle_index, s.cycle_index):
        raise ValidationError("feature table and SOH series are not aligned")


def rank_by_pcc(t: FeatureTable, s: SohSeries, k: int) -> SelectionReport:
    """Rank features by |Pearson r| against SOH and select the top k."""
    _check_alignment(t, s)
    if not 1 <= k <= len(t.feature_ids):
        raise ValidationError(f"k must be in [1, {len(t.feature_ids)}], got {k}")
    scores: dict[str, float] = {}
    degenerate: set[str] = set()
    for j, fid in enumerate(t.feature_ids):
        col = t.values[:, j]
        if np.any(np.isnan(col)):
            ok = ~np.isnan(col)
            col, y = col[ok], s.soh[ok]
        else:
            y = s.soh
        r = pearson_correlation(col, y) if len(col) >= 2 else float("nan")
        if np.isnan(r):
            scores[fid] = 0.0
            degenerate.add(fid)
        else:
            scores[fid] = r
    ranks = _rank_ids(scores, degenerate)
    return SelectionReport(
        method="pcc",
        scores=scores,
        ranks=ranks,
        selected=ranks[:k],
        k=k,
        config={},
        degenerate=sorted(degenerate, key=_feature_order),
    )


@dataclass(frozen=True)
class LinearSurrogate:
    """Ridge-fitted linear model on standardized features.

    Prediction for a raw row x: bias + weights . (x - mean) / std.
    `feature_means` is the background mean in standardized space (zero
    when the background is the fitting slice itself), so the prediction
    of the all-background instance is bias + weights . feature_means.
    """

    weights: np.ndarray  # per feature, standardized space
    bias: float
    feature_means: np.ndarray  # background mean, standardized space
    mean: np.ndarray  # standardization, raw space
    std: np.ndarray
    feature_ids: list[str]
    degenerate: list[str] = field(default_factory=list)

    def standardize(self, x_raw: np.ndarray) -> np.ndarray:
        return (np.asarray(x_raw, dtype=float) - self.mean) / self.std

    def predict_std(self, x_std: np.ndarray) -> np.ndarray:
        x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
        return x_std @ self.weights + self.bias

    def predict(self, x_raw: np.ndarray) -> np.ndarray:
        return self.predict_std(self.standardize(np.atleast_2d(x_raw)))


def fit_linear_surrogate(
    t: FeatureTable, s: SohSeries, ridge: float = DEFAULT_RIDGE
) -> LinearSurrogate:
    """Fit soh ~ w . x_std + b by ridge least squares (bias unpenalized).

    Standardization (mean, std) comes from the given rows; constant
    columns are excluded from the fit and get weight 0.
    """
    _check_alignment(t, s)
    n, d = t.values.shape
    if ridge < 0:
        raise ValidationError(f"ridge must be >= 0, got {ridge}")
    if n < d + 1 and ridge == 0:
        raise ValidationError(
            f"{n} rows cannot determine {d} weights at ridge=0; set ridge > 0"
        )
    X = t.values.astype(float)
    if np.any(np.isnan(X)):
        raise ValidationError("feature table contains NaN; exclude flagged columns first")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    live = (std > 0) & (np.ptp(X, axis=0) > 0)
    degenerate = [f for f, ok in zip(t.feature_ids, live) if not ok]
    std_safe = np.where(live, std, 1.0)
    Xs = (X - mean) / std_safe

    y = s.soh.astype(float)
    Xl = Xs[:, live]
    # Columns are centered, so the unpenalized bias decouples to mean(y).
    bias = float(y.mean())
    yc = y - bias
    gram = Xl.T @ Xl + ridge * np.eye(Xl.shape[1])
    try:
        w_live = np.linalg.solve(gram, Xl.T @ yc)
    except np.linalg.LinAlgError:
        raise ValidationError("normal equations singular at ridge=0; set ridge > 0") from None
    if ridge == 0 and np.linalg.matrix_rank(Xl) < Xl.shape[1]:
        raise ValidationError("normal equations singular at ridge=0; set ridge > 0")

    weights = np.zeros(d)
    weights[live] = w_live
    return LinearSurrogate(
        weights=weights,
        bias=bias,
        feature_means=np.zeros(d),
        mean=mean,
        std=std_safe,
        feature_ids=list(t.feature_ids),
        degenerate=degenerate,
    )


def shapley_exact_linear(m: LinearSurrogate, x: np.ndarray) -> np.ndarray:
    """Exact Shapley values of a linear model with mean imputation:
    phi_i = w_i * (x_i - mu_i), in standardized space.

    Efficiency holds exactly: sum(phi) = f(x) - f(mu).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != m.weights.shape:
        raise ValidationError(f"instance shape {x.shape} != weights shape {m.weights.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("instance must be finite")
    return m.weights * (x - m.feature_means)


def shapley_permutation_mc(
    f: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    background: np.ndarray,
    n_perm: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Permutation Monte-Carlo Shapley estimates for a black-box predictor.

    For each sampled permutation, features are inserted in order and the
    marginal contributions f(S u {i}) - f(S) accumulated, with
    out-of-coalition features imputed from one background row sampled per
    permutation. Returns (phi, standard errors). Each permutation uses
    its own RNG stream keyed by (seed, permutation index), so the result
    is deterministic and independent of evaluation order.
    """
    x = np.asarray(x, dtype=float)
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if n_perm < 1:
        raise ValidationError(f"n_perm must be >= 1, got {n_perm}")
    if background.shape[0] < 1:
        raise ValidationError("background must be non-empty")
    if background.shape[1] != x.size:
        raise ValidationError(
            f"background width {background.shape[1]} != instance size {x.size}"
        )
    d = x.size
    contribs = np.empty((n_perm, d))
    for p in range(n_perm):
        rng = np.random.default_rng([seed, p])
        perm = rng.permutation(d)
        b_row = background[rng.integers(background.shape[0])]
        # Row j has the first j permuted features set to x, the rest to b_row.
        Z = np.tile(b_row, (d + 1, 1))
        for j, idx in enumerate(perm):
            Z[j + 1 :, idx] = x[idx]
        try:
            vals = np.asarray(f(Z), dtype=float).reshape(-1)
        except Exception as exc:
            raise RuntimeError(
                f"predictor failed on imputed instances (permutation {p}): {exc}"
            ) from exc
        if vals.shape != (d + 1,):
            raise RuntimeError(
                f"predictor returned shape {vals.shape}, expected ({d + 1},) (permutation {p})"
            )
        contribs[p, perm] = np.diff(vals)
    phi = contribs.mean(axis=0)
    if n_perm > 1:
        se = contribs.std(axis=0, ddof=1) / np.sqrt(n_perm)
    else:
        se = np.zeros(d)
    return phi, se


def global_shap_ranking(
    t: FeatureTable,
    s: SohSeries,
    k: int,
    ridge: float = DEFAULT_RIDGE,
    seed: int = 42,
    n_perm: int = DEFAULT_N_PERM,
    estimator: str = "exact",
) -> SelectionReport:
    """Score each feature by mean |phi| over cycles and select the top k.

    Fits the linear surrogate on the given rows, attributes every row's
    prediction against the training-slice background, and aggregates.
    estimator='exact' uses the closed form; 'mc' runs the permutation
    estimator per row (seeded per row, background = fitting rows).
    """
    _check_alignment(t, s)
    if not 1 <= k <= len(t.feature_ids):
        raise ValidationError(f"k must be in [1, {len(t.feature_ids)}], got {k}")
    if estimator not in ("exact", "mc"):
        raise ValidationError(f"unknown estimator {estimator!r}")
    # columns with not-computable entries are excluded like degenerate ones
    nan_cols = np.any(np.isnan(t.values), axis=0)
    if np.any(nan_cols):
        cleaned = t.values.copy()
        cleaned[:, nan_cols] = 0.0
        t = FeatureTable(
            cycle_index=t.cycle_index, values=cleaned, feature_ids=list(t.feature_ids)
        )
    m = fit_linear_surrogate(t, s, ridge=ridge)
    Xs = (t.values - m.mean) / m.std
    if estimator == "exact":
        phis = m.weights * (Xs - m.feature_means)  # rowwise closed form
    else:
        rows = []
        for r in range(Xs.shape[0]):
            phi, _ = shapley_permutation_mc(
                m.predict_std, Xs[r], Xs, n_perm=n_perm, seed=seed + r
            )
            rows.append(phi)
        phis = np.vstack(rows)
    mean_abs = np.abs(phis).mean(axis=0)
    degenerate = set(m.degenerate)
    scores = {
        fid: 0.0 if fid in degenerate else float(mean_abs[j])
        for j, fid in enumerate(t.feature_ids)
    }
    ranks = _rank_ids(scores, degenerate)
    return SelectionReport(
        method="shap",
        scores=scores,
        ranks=ranks,
        selected=ranks[:k],
        k=k,
        config={
            "ridge": ridge,
            "seed": seed,
            "n_perm": n_perm,
            "estimator": estimator,
            "background_size": int(t.values.shape[0]),
        },
        degenerate=sorted(degenerate, key=_feature_order),
    )
