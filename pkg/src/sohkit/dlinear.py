"""Decomposition-linear SOH forecaster.

Every input window of feature history is split per channel into a
moving-average trend and a remainder (trend + remainder reconstructs the
input exactly); one linear head maps the trend block and another maps
the remainder block, and their outputs plus a bias give the prediction.
Because the composite model is linear in all parameters, fitting is a
closed-form ridge solve: no learning rate, no epochs, bit-reproducible.

Windowing convention: a window anchored at row position a feeds the L
rows [a-L, a-1] of standardized feature channels and predicts the SOH of
rows [a, a+H-1]. Training windows have all targets at or before
train_end; test windows are anchored at every later cycle.
Standardization is fitted on rows at or before train_end only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .features import FeatureTable
from .ingest import SohSeries

DEFAULT_MA_WINDOW = 5
DEFAULT_LOOKBACK = 16
DEFAULT_RIDGE = 1e-3


def _check_window(n: int, length: int) -> None:
    if n % 2 == 0:
        raise ValidationError(f"moving-average window must be odd, got {n}")
    if not 1 <= n <= length:
        raise ValidationError(f"window {n} out of range [1, {length}]")


def _moving_average(X: np.ndarray, n: int) -> np.ndarray:
    """Centered moving average along axis -2 with replicate padding."""
    pad = n // 2
    if pad == 0:
        return X.copy()
    widths = [(0, 0)] * X.ndim
    widths[-2] = (pad, pad)
    Xp = np.pad(X, widths, mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(Xp, n, axis=X.ndim - 2)
    return win.mean(axis=-1)


@dataclass(frozen=True)
class Decomposition:
    """Trend/remainder split; trend + remainder reconstructs the input."""

    trend: np.ndarray
    remainder: np.ndarray
    window: int


def decompose(x: np.ndarray, n: int) -> Decomposition:
    """Split a series into a centered moving-average trend (replicate
    padding of floor(n/2) at both ends) and the remainder x - trend."""
    x = np.asarray(x, dtype=float)
    _check_window(n, x.shape[-1] if x.ndim == 1 else x.shape[-2])
    if x.ndim == 1:
        trend = _moving_average(x[:, None], n)[:, 0]
    else:
        trend = _moving_average(x, n)
    return Decomposition(trend=trend, remainder=x - trend, window=n)


@dataclass(frozen=True)
class SupervisedWindows:
    """Standardized lookback windows with their SOH targets."""

    inputs: np.ndarray  # (n_windows, L, C)
    targets: np.ndarray  # (n_windows, H)
    anchor_cycles: np.ndarray  # (n_windows,) cycle index of the first target
    target_cycles: np.ndarray  # (n_windows, H)
    channels: list[str]
    lookback: int
    horizon: int
    std_mean: np.ndarray  # per channel, training rows only
    std_scale: np.ndarray
    n_imputed: int = 0

    def __len__(self) -> int:
        return len(self.inputs)


def build_supervised(
    t: FeatureTable, s: SohSeries, lookback: int, horizon: int, train_end: int
) -> tuple[SupervisedWindows, SupervisedWindows]:
    """Slice an aligned feature table / SOH series into training and test
    windows around the train_end cycle.

    Standardization is fitted on the training rows only and applied to
    every window; NaN feature entries standardize to 0 (training-mean
    imputation) with a count kept on the windows. No training window
    touches any cycle after train_end.
    """
    if not np.array_equal(t.cycle_index, s.cycle_index):
        raise ValidationError("feature table and SOH series are not aligned")
    L, H = lookback, horizon
    if L < 1 or H < 1:
        raise ValidationError(f"need lookback >= 1 and horizon >= 1, got ({L}, {H})")
    n_rows = len(t)
    n_train = int(np.count_nonzero(t.cycle_index <= train_end))
    if n_train < L + H:
        raise ValidationError(
            f"training slice has {n_train} cycles; minimum is lookback + horizon = {L + H}"
        )
    if n_rows <= n_train:
        raise ValidationError(
            f"no cycles after train_end={train_end}; nothing to forecast"
        )

    X = t.values.astype(float)
    train_rows = X[:n_train]
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(train_rows, axis=0)
        scale = np.nanstd(train_rows, axis=0)
    # bitwise-constant columns keep scale 1 so they standardize to ~0
    # instead of amplified mean-rounding noise
    spread = np.array([np.ptp(train_rows[:, j][~np.isnan(train_rows[:, j])])
                       if np.any(~np.isnan(train_rows[:, j])) else 0.0
                       for j in range(train_rows.shape[1])])
    scale = np.where((scale > 0) & (spread > 0), scale, 1.0)
    Xs = (X - mean) / scale
    n_imputed = int(np.count_nonzero(np.isnan(Xs)))
    Xs = np.nan_to_num(Xs, nan=0.0)

    def windows(anchors: np.ndarray) -> SupervisedWindows:
        inputs = np.stack([Xs[a - L : a] for a in anchors])
        targets = np.stack([s.soh[a : a + H] for a in anchors])
        target_cycles = np.stack([t.cycle_index[a : a + H] for a in anchors])
        return SupervisedWindows(
            inputs=inputs,
            targets=targets,
            anchor_cycles=t.cycle_index[anchors],
            target_cycles=target_cycles,
            channels=list(t.feature_ids),
            lookback=L,
            horizon=H,
            std_mean=mean,
            std_scale=scale,
            n_imputed=n_imputed,
        )

    train_anchors = np.arange(L, n_train - H + 1)
    test_anchors = np.arange(n_train, n_rows - H + 1)
    if len(test_anchors) == 0:
        # Series too short for a full horizon after train_end; anchor the
        # final window so the remaining cycles are still covered.
        test_anchors = np.array([n_rows - H])
    return windows(train_anchors), windows(test_anchors)


@dataclass(frozen=True)
class DLinearModel:
    """Linear trend/remainder heads over decomposed lookback windows.

    Weight blocks have shape (H, L, C); `individual` records whether they
    were stored (and serialized) as per-channel blocks. The composite
    model class is the same either way for a scalar target, so the flag
    does not change predictions.
    """

    lookback: int
    horizon: int
    channels: list[str]
    ma_window: int
    individual: bool
    trend_weights: np.ndarray  # (H, L, C)
    remainder_weights: np.ndarray  # (H, L, C)
    bias: np.ndarray  # (H,)
    std_mean: np.ndarray  # per channel
    std_scale: np.ndarray
    ridge: float

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Predict H targets per standardized (n, L, C) input window."""
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 2:
            inputs = inputs[None]
        n, L, C = inputs.shape
        if (L, C) != (self.lookback, len(self.channels)):
            raise ValidationError(
                f"window shape ({L}, {C}) does not match model "
                f"({self.lookback}, {len(self.channels)})"
            )
        trend = _moving_average(inputs, self.ma_window)
        remainder = inputs - trend
        return (
            np.einsum("hlc,nlc->nh", self.trend_weights, trend)
            + np.einsum("hlc,nlc->nh", self.remainder_weights, remainder)
            + self.bias
        )

    def to_json(self) -> str:
        payload = {
            "model": "dlinear",
            "lookback": self.lookback,
            "horizon": self.horizon,
            "channels": self.channels,
            "ma_window": self.ma_window,
            "individual": self.individual,
            "ridge": self.ridge,
            "bias": self.bias.tolist(),
            "std_mean": self.std_mean.tolist(),
            "std_scale": self.std_scale.tolist(),
        }
        if self.individual:
            payload["trend_weights"] = {
                ch: self.trend_weights[:, :, c].tolist() for c, ch in enumerate(self.channels)
            }
            payload["remainder_weights"] = {
                ch: self.remainder_weights[:, :, c].tolist()
                for c, ch in enumerate(self.channels)
            }
        else:
            payload["trend_weights"] = self.trend_weights.tolist()
            payload["remainder_weights"] = self.remainder_weights.tolist()
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DLinearModel":
        d = json.loads(text)
        if d.get("model") != "dlinear":
            raise ValidationError("not a dlinear model file")
        H, L = d["horizon"], d["lookback"]
        channels = list(d["channels"])
        if d["individual"]:
            wt = np.stack([np.asarray(d["trend_weights"][ch]) for ch in channels], axis=2)
            ws = np.stack([np.asarray(d["remainder_weights"][ch]) for ch in channels], axis=2)
        else:
            wt = np.asarray(d["trend_weights"])
            ws = np.asarray(d["remainder_weights"])
        return DLinearModel(
            lookback=L,
            horizon=H,
            channels=channels,
            ma_window=d["ma_window"],
            individual=d["individual"],
            trend_weights=wt.reshape(H, L, len(channels)),
            remainder_weights=ws.reshape(H, L, len(channels)),
            bias=np.asarray(d["bias"], dtype=float),
            std_mean=np.asarray(d["std_mean"], dtype=float),
            std_scale=np.asarray(d["std_scale"], dtype=float),
            ridge=d["ridge"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "DLinearModel":
        return DLinearModel.from_json(Path(path).read_text(encoding="utf-8"))


def fit(
    train: SupervisedWindows,
    ma_window: int = DEFAULT_MA_WINDOW,
    individual: bool = False,
    ridge: float = DEFAULT_RIDGE,
) -> DLinearModel:
    """Fit the trend and remainder heads by ridge least squares.

    The decomposition is applied within each window per channel; both
    weight blocks and the bias are solved jointly from the normal
    equations (bias unpenalized). With individual=True the same joint
    solution is stored as per-channel blocks.
    """
    if len(train) < 1:
        raise ValidationError("need at least 1 training window")
    if ridge < 0:
        raise ValidationError(f"ridge must be >= 0, got {ridge}")
    n, L, C = train.inputs.shape
    _check_window(ma_window, L)
    H = train.horizon

    trend = _moving_average(train.inputs, ma_window)
    remainder = train.inputs - trend
    # Channel-major flattening: block c occupies columns [c*L, (c+1)*L).
    flat = lambda A: A.transpose(0, 2, 1).reshape(n, C * L)
    design = np.hstack([flat(trend), flat(remainder), np.ones((n, 1))])

    m = design.shape[1]
    penalty = ridge * np.eye(m)
    penalty[-1, -1] = 0.0  # bias unpenalized
    gram = design.T @ design + penalty
    if ridge == 0 and np.linalg.matrix_rank(design) < m:
        raise ValidationError("normal equations singular at ridge=0; set ridge > 0")
    try:
        theta = np.linalg.solve(gram, design.T @ train.targets)
    except np.linalg.LinAlgError:
        raise ValidationError("normal equations singular at ridge=0; set ridge > 0") from None

    unflat = lambda W: W.T.reshape(H, C, L).transpose(0, 2, 1)  # (H, L, C)
    return DLinearModel(
        lookback=L,
        horizon=H,
        channels=list(train.channels),
        ma_window=ma_window,
        individual=individual,
        trend_weights=unflat(theta[: C * L]),
        remainder_weights=unflat(theta[C * L : 2 * C * L]),
        bias=theta[-1].copy(),
        std_mean=train.std_mean.copy(),
        std_scale=train.std_scale.copy(),
        ridge=ridge,
    )


def forecast_series(m: DLinearModel, test: SupervisedWindows) -> SohSeries:
    """One SOH prediction per test cycle.

    Cycles covered by several overlapping horizons take the most recent
    window's value.
    """
    if test.channels != m.channels:
        raise ValidationError(
            f"channel mismatch: model {m.channels} vs windows {test.channels}"
        )
    if (test.lookback, test.horizon) != (m.lookback, m.horizon):
        raise ValidationError(
            f"window geometry ({test.lookback}, {test.horizon}) does not match model "
            f"({m.lookback}, {m.horizon})"
        )
    preds = m.predict(test.inputs)
    by_cycle: dict[int, float] = {}
    for w in range(len(test)):
        for h in range(m.horizon):
            by_cycle[int(test.target_cycles[w, h])] = float(preds[w, h])
    cycles = np.array(sorted(by_cycle), dtype=int)
    return SohSeries(
        cycle_index=cycles,
        soh=np.array([by_cycle[c] for c in cycles]),
        initial_capacity=None,
    )
