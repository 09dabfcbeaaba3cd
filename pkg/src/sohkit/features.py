"""Per-cycle feature extraction from charge/discharge telemetry.

Twenty features per cycle pair, computed from the discharge record
(current/voltage statistics, early-curve voltage slopes, temperature
statistics, total time) and the charge record (temperature statistics,
CC/CV phase durations):

    F1   variance of measured current, discharge
    F2   variance of measured voltage, discharge
    F3   median of load voltage, discharge
    F4   skewness of measured voltage, discharge
    F5   skewness of load voltage, discharge
    F6   slope of discharge voltage curve, 50 s to 500 s
    F7   slope of discharge voltage curve, 50 s to 1000 s
    F8   slope of discharge voltage curve, 50 s to 1500 s
    F9   max temperature, discharge
    F10  mean temperature, discharge
    F11  variance of temperature, discharge
    F12  skewness of temperature, discharge
    F13  min temperature, discharge
    F14  max temperature, charge
    F15  min temperature, charge
    F16  mean temperature, charge
    F17  skewness of temperature, charge
    F18  CC charging time
    F19  CV charging time
    F20  total discharging time

Variance and skewness use population (1/N) moments. Features that cannot
be computed are NaN in the vector and carry a reason in `flags`; values
that are computable but degraded (e.g. a slope window truncated at the
record end) stay finite and carry a provenance note in `flags`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ParseError, ValidationError
from .ingest import CellDataset, CycleRecord, SohSeries, compute_soh

FEATURE_IDS = [f"F{i}" for i in range(1, 21)]

V_CUT_DEFAULT = 4.2
I_CUT_DEFAULT = 0.02


def skewness(samples: np.ndarray) -> float:
    """Fisher-Pearson moment coefficient g1 = m3 / m2^(3/2) with
    population moments mk = (1/N) sum (x - mean)^k.

    Returns NaN for constant input (m2 = 0). Requires >= 3 samples.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 3:
        raise ValidationError(f"skewness needs >= 3 samples, got {x.size}")
    # ptp check: a bitwise-constant array can still have m2 != 0 from
    # rounding of the mean, and the moments of that noise are meaningless
    if np.ptp(x) == 0.0:
        return float("nan")
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 == 0.0:
        return float("nan")
    m3 = np.mean(d**3)
    return float(m3 / m2**1.5)


def slope_between(rec: CycleRecord, t1: float, t2: float) -> float:
    """OLS slope (V/s) of v_measured against t over samples with
    t1 <= t <= t2 on a discharge record.

    If the record ends before t2 the fit covers [t1, end]; the caller is
    responsible for flagging that (observable as rec.t[-1] < t2).
    Returns NaN when fewer than 2 samples fall in the window.
    """
    if not (t2 > t1 >= 0):
        raise ValidationError(f"need t2 > t1 >= 0, got ({t1}, {t2})")
    if rec.t[-1] < t1:
        raise ValidationError(
            f"record ends at {rec.t[-1]} s, before window start {t1} s (cycle {rec.cycle_index})"
        )
    mask = (rec.t >= t1) & (rec.t <= t2)
    if np.count_nonzero(mask) < 2:
        return float("nan")
    t = rec.t[mask]
    v = rec.v_measured[mask]
    dt = t - t.mean()
    denom = np.dot(dt, dt)
    if denom == 0.0:
        return float("nan")
    return float(np.dot(dt, v - v.mean()) / denom)


class CcCvTimes(NamedTuple):
    t_cc: float
    t_cv: float
    cc_reached: bool
    cv_reached: bool


def _interp_crossing(t0, y0, t1, y1, y_cut) -> float:
    if y1 == y0:
        return float(t1)
    return float(t0 + (y_cut - y0) * (t1 - t0) / (y1 - y0))


def cc_cv_split(
    rec: CycleRecord, v_cut: float = V_CUT_DEFAULT, i_cut: float = I_CUT_DEFAULT
) -> CcCvTimes:
    """Split a charge record into CC and CV phase durations.

    t_cc is the first time v_measured reaches v_cut, with linear
    interpolation between the bracketing samples; t_cv is the span from
    t_cc to the first later time |i_measured| falls to i_cut
    (interpolated). When a threshold is never reached, the corresponding
    time falls back to the record end and the matching `*_reached` flag
    is False.
    """
    if rec.phase != "charge":
        raise ValidationError(f"cc_cv_split expects a charge record, got {rec.phase!r}")
    t, v, i = rec.t, rec.v_measured, np.abs(rec.i_measured)

    hit = np.nonzero(v >= v_cut)[0]
    if len(hit) == 0:
        t_cc = float(t[-1])
        cc_reached = False
    else:
        j = int(hit[0])
        t_cc = float(t[j]) if j == 0 else _interp_crossing(t[j - 1], v[j - 1], t[j], v[j], v_cut)
        cc_reached = True

    after = np.nonzero((t > t_cc) & (i <= i_cut))[0]
    if len(after) == 0:
        t_cv = float(t[-1]) - t_cc
        cv_reached = False
    else:
        m = int(after[0])
        if m == 0:
            t_end = float(t[0])
        else:
            t_end = _interp_crossing(t[m - 1], i[m - 1], t[m], i[m], i_cut)
        t_cv = max(t_end, t_cc) - t_cc
        cv_reached = True

    return CcCvTimes(t_cc=t_cc, t_cv=t_cv, cc_reached=cc_reached, cv_reached=cv_reached)


def _pop_var(x: np.ndarray) -> float:
    return float(np.var(np.asarray(x, dtype=float)))


def _safe_skew(x: np.ndarray, fid: str, flags: dict) -> float:
    if len(x) < 3:
        flags[fid] = "fewer than 3 samples"
        return float("nan")
    g1 = skewness(x)
    if np.isnan(g1):
        flags[fid] = "zero variance"
    return g1


@dataclass(frozen=True)
class FeatureVector:
    """Values for F1..F20 of one cycle, NaN where not computable.

    `flags` maps feature ids to a reason (NaN entries) or a provenance
    note (finite but degraded entries).
    """

    cycle_index: int
    values: np.ndarray
    flags: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_IDS, (float(v) for v in self.values)))


def extract_cycle_features(charge: CycleRecord, discharge: CycleRecord) -> FeatureVector:
    """Compute F1..F20 for one (charge, discharge) pair.

    Individual features that cannot be computed are NaN with a reason in
    flags; the rest of the vector is still produced.
    """
    if charge.cycle_index != discharge.cycle_index:
        raise ValidationError(
            f"pair indices differ: {charge.cycle_index} vs {discharge.cycle_index}"
        )
    if charge.phase != "charge" or discharge.phase != "discharge":
        raise ValidationError("extract_cycle_features expects (charge, discharge)")

    flags: dict[str, str] = {}
    vals = np.full(20, np.nan)

    vals[0] = _pop_var(discharge.i_measured)                       # F1
    vals[1] = _pop_var(discharge.v_measured)                       # F2
    vals[2] = float(np.median(discharge.v_load))                   # F3
    vals[3] = _safe_skew(discharge.v_measured, "F4", flags)        # F4
    vals[4] = _safe_skew(discharge.v_load, "F5", flags)            # F5

    for fid, idx, t2 in (("F6", 5, 500.0), ("F7", 6, 1000.0), ("F8", 7, 1500.0)):
        if discharge.t[-1] < 50.0:
            flags[fid] = "record ends before 50 s"
            continue
        s = slope_between(discharge, 50.0, t2)
        vals[idx] = s
        if np.isnan(s):
            flags[fid] = "fewer than 2 samples in window"
        elif discharge.t[-1] < t2:
            flags[fid] = f"window truncated at record end ({discharge.t[-1]:.0f} s < {t2:.0f} s)"

    vals[8] = float(np.max(discharge.temp))                        # F9
    vals[9] = float(np.mean(discharge.temp))                       # F10
    vals[10] = _pop_var(discharge.temp)                            # F11
    vals[11] = _safe_skew(discharge.temp, "F12", flags)            # F12
    vals[12] = float(np.min(discharge.temp))                       # F13
    vals[13] = float(np.max(charge.temp))                          # F14
    vals[14] = float(np.min(charge.temp))                          # F15
    vals[15] = float(np.mean(charge.temp))                         # F16
    vals[16] = _safe_skew(charge.temp, "F17", flags)               # F17

    split = cc_cv_split(charge)
    vals[17] = split.t_cc                                          # F18
    vals[18] = split.t_cv                                          # F19
    if not split.cc_reached:
        flags["F18"] = "voltage never reached cutoff; record end used"
    if not split.cv_reached:
        flags["F19"] = "current never reached cutoff; record end used"

    vals[19] = discharge.duration                                  # F20

    return FeatureVector(cycle_index=discharge.cycle_index, values=vals, flags=flags)


@dataclass(frozen=True)
class FeatureTable:
    """F1..F20 values per cycle, aligned 1:1 with a SohSeries by cycle_index."""

    cycle_index: np.ndarray
    values: np.ndarray  # shape (n_cycles, 20)
    feature_ids: list[str] = field(default_factory=lambda: list(FEATURE_IDS))
    flags: list[dict[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cycle_index)

    def column(self, feature_id: str) -> np.ndarray:
        return self.values[:, self.feature_ids.index(feature_id)]

    def restrict(self, feature_ids: list[str]) -> "FeatureTable":
        """Sub-table holding only the given feature columns, in the given order."""
        idx = [self.feature_ids.index(f) for f in feature_ids]
        return FeatureTable(
            cycle_index=self.cycle_index,
            values=self.values[:, idx],
            feature_ids=list(feature_ids),
            flags=self.flags,
        )


def extract_feature_table(ds: CellDataset) -> FeatureTable:
    """One FeatureVector row per cycle pair, aligned with compute_soh(ds).

    Row-level not-computable entries are retained as NaN + flag; the
    extraction fails only if an entire column is not computable.
    """
    if len(ds.cycles) == 0:
        raise ValidationError("dataset has no cycles")
    rows = [extract_cycle_features(ch, dis) for ch, dis in ds.cycles]
    values = np.vstack([r.values for r in rows])
    dead = np.all(np.isnan(values), axis=0)
    if np.any(dead):
        bad = [FEATURE_IDS[i] for i in np.nonzero(dead)[0]]
        raise ValidationError(f"whole feature column(s) not computable: {', '.join(bad)}")
    return FeatureTable(
        cycle_index=np.array([r.cycle_index for r in rows], dtype=int),
        values=values,
        flags=[r.flags for r in rows],
    )


def save_feature_csv(table: FeatureTable, soh: SohSeries, path: str | Path) -> None:
    """Export `cycle_index,F1,...,F20,soh` for downstream tools."""
    if not np.array_equal(table.cycle_index, soh.cycle_index):
        raise ValidationError("feature table and SOH series are not aligned")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle_index"] + table.feature_ids + ["soh"])
        for k in range(len(table)):
            row = [int(table.cycle_index[k])]
            row += [repr(float(v)) for v in table.values[k]]
            row.append(repr(float(soh.soh[k])))
            writer.writerow(row)


def load_feature_csv(path: str | Path) -> tuple[FeatureTable, SohSeries]:
    """Read a feature CSV written by save_feature_csv."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"line 1: {path.name} is empty") from None
        if header[0] != "cycle_index" or header[-1] != "soh":
            raise ParseError(f"line 1: bad feature CSV header in {path.name}")
        feature_ids = header[1:-1]
        cycles, rows, sohs = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                cycles.append(int(row[0]))
                rows.append([float(x) for x in row[1:-1]])
                sohs.append(float(row[-1]))
            except ValueError:
                raise ParseError(f"line {line_no}: bad numeric value") from None
    cycle_index = np.asarray(cycles, dtype=int)
    table = FeatureTable(
        cycle_index=cycle_index,
        values=np.asarray(rows, dtype=float),
        feature_ids=feature_ids,
    )
    series = SohSeries(cycle_index=cycle_index, soh=np.asarray(sohs, dtype=float))
    return table, series
