"""Convert NASA Prognostics Center battery aging containers to the
canonical per-cycle CSV schema.

The source `.mat` files (B0005/B0006/B0007/B0018 style) hold a struct
array `cycle` whose entries carry a `type` ('charge', 'discharge',
'impedance'), an ambient temperature, and a `data` struct of sample
arrays: Voltage_measured, Current_measured, Temperature_measured, Time,
plus Voltage_load/Current_load and a scalar Capacity on discharge
entries and Voltage_charge/Current_charge on charge entries (the
charger- or load-side signals both map onto the schema's v_load/i_load
columns).

Output schema (one row per sample):

    cycle_index,phase,t_s,v_measured_V,i_measured_A,temp_C,v_load_V,i_load_A,capacity_Ah

Impedance entries, cycles missing either phase, discharges without a
capacity, and entries with unusable sample data are dropped; every drop
is listed in the conversion report. Retained pairs are renumbered 1..N
(original entry indices recorded in the report). Floats are written
with shortest round-trip formatting, so conversion is deterministic and
byte-identical across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import loadmat

CSV_HEADER = (
    "cycle_index,phase,t_s,v_measured_V,i_measured_A,temp_C,v_load_V,i_load_A,capacity_Ah"
)

KNOWN_TYPES = ("charge", "discharge", "impedance")


class ConversionError(Exception):
    """The container cannot be read at all."""


@dataclass
class ConversionReport:
    """Accounting for one conversion.

    Counts are in cycle *entries* (a retained pair contributes two), so
    cycles_emitted + cycles_dropped equals the number of charge/discharge
    entries in the source. Impedance entries are tallied separately.
    """

    cell_id: str
    cycles_emitted: int = 0
    cycles_dropped: int = 0
    impedance_skipped: int = 0
    drop_reasons: list[tuple[int, str]] = field(default_factory=list)
    renumbering: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "cell_id": self.cell_id,
            "cycles_emitted": self.cycles_emitted,
            "cycles_dropped": self.cycles_dropped,
            "impedance_skipped": self.impedance_skipped,
            "drop_reasons": [
                {"source_index": i, "reason": r} for i, r in self.drop_reasons
            ],
            "renumbering": self.renumbering,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def _as_1d(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float)).ravel()


def _get(data, name):
    return getattr(data, name, None)


def _extract_samples(entry, phase: str):
    """Pull the five sample arrays (and capacity) out of one cycle entry.

    Returns (samples dict, capacity, problem string). Charge entries map
    Voltage_charge/Current_charge into the load columns; discharge
    entries map Voltage_load/Current_load.
    """
    data = _get(entry, "data")
    if data is None:
        return None, None, "no data field"
    t = _get(data, "Time")
    v = _get(data, "Voltage_measured")
    i = _get(data, "Current_measured")
    temp = _get(data, "Temperature_measured")
    if phase == "discharge":
        v_side = _get(data, "Voltage_load")
        i_side = _get(data, "Current_load")
    else:
        v_side = _get(data, "Voltage_charge")
        i_side = _get(data, "Current_charge")
    if any(x is None for x in (t, v, i, temp, v_side, i_side)):
        return None, None, "missing sample field"

    t = _as_1d(t)
    arrays = {
        "t": t,
        "v": _as_1d(v),
        "i": _as_1d(i),
        "temp": _as_1d(temp),
        "v_side": _as_1d(v_side),
        "i_side": _as_1d(i_side),
    }
    n = len(t)
    if n < 2:
        return None, None, "fewer than 2 samples"
    if any(len(a) != n for a in arrays.values()):
        return None, None, "sample arrays of unequal length"

    # drop exact-duplicate timestamps (the loggers occasionally repeat one)
    keep = np.concatenate([[True], np.diff(t) > 0])
    if not keep.all():
        if not np.all(np.diff(t[keep]) > 0):
            return None, None, "non-monotone time"
        arrays = {k: a[keep] for k, a in arrays.items()}
        if len(arrays["t"]) < 2:
            return None, None, "fewer than 2 samples"
    elif not np.all(np.diff(t) > 0):
        return None, None, "non-monotone time"

    arrays["t"] = arrays["t"] - arrays["t"][0]

    capacity = None
    if phase == "discharge":
        cap = _get(data, "Capacity")
        if cap is not None:
            cap_arr = _as_1d(cap)
            if len(cap_arr) and np.isfinite(cap_arr[0]) and cap_arr[0] > 0:
                capacity = float(cap_arr[0])
        if capacity is None:
            return None, None, "missing capacity"
    return arrays, capacity, None


def _load_cycle_entries(mat_path: Path):
    try:
        mat = loadmat(str(mat_path), squeeze_me=True, struct_as_record=False)
    except Exception as exc:
        raise ConversionError(f"cannot read {mat_path}: {exc}") from exc
    key = next(
        (k for k in mat if not k.startswith("__") and hasattr(mat[k], "cycle")), None
    )
    if key is None:
        raise ConversionError(f"{mat_path}: no battery struct with a 'cycle' field")
    return key, np.atleast_1d(mat[key].cycle)


def convert(mat_path: str | Path, out_csv: str | Path) -> ConversionReport:
    """Convert one container to a schema-conformant CSV.

    Walks the cycle entries in order, pairing each charge with the next
    discharge; anything that cannot form a complete, valid pair is
    dropped with a reason. Returns the ConversionReport.
    """
    mat_path = Path(mat_path)
    cell_id, entries = _load_cycle_entries(mat_path)
    report = ConversionReport(cell_id=cell_id)

    pairs = []  # (orig_charge_idx, charge_samples, orig_discharge_idx, discharge_samples, cap)
    pending = None  # (orig_idx, samples) of an unpaired charge

    def drop(idx: int, reason: str) -> None:
        report.cycles_dropped += 1
        report.drop_reasons.append((idx, reason))

    for idx, entry in enumerate(entries):
        ctype = str(np.atleast_1d(getattr(entry, "type", "?"))[0])
        if ctype == "impedance":
            report.impedance_skipped += 1
            continue
        if ctype not in KNOWN_TYPES:
            drop(idx, f"unknown cycle type {ctype!r}")
            continue
        samples, cap, problem = _extract_samples(entry, ctype)
        if problem is not None:
            drop(idx, problem)
            continue
        if ctype == "charge":
            if pending is not None:
                drop(pending[0], "missing discharge phase")
            pending = (idx, samples)
        else:  # discharge
            if pending is None:
                drop(idx, "missing charge phase")
                continue
            pairs.append((pending[0], pending[1], idx, samples, cap))
            pending = None
    if pending is not None:
        drop(pending[0], "missing discharge phase")

    out_csv = Path(out_csv)
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for new_idx, (ci, charge, di, discharge, cap) in enumerate(pairs, start=1):
            report.renumbering.append(
                {"cycle_index": new_idx, "source_charge": ci, "source_discharge": di}
            )
            _write_phase(fh, new_idx, "charge", charge, None)
            _write_phase(fh, new_idx, "discharge", discharge, cap)
            report.cycles_emitted += 2
    return report


def _write_phase(fh, cycle_index: int, phase: str, samples: dict, capacity) -> None:
    cap = "" if capacity is None else repr(float(capacity))
    cols = [samples[k].tolist() for k in ("t", "v", "i", "temp", "v_side", "i_side")]
    for row in zip(*cols):
        fh.write(
            f"{cycle_index},{phase}," + ",".join(repr(x) for x in row) + f",{cap}\n"
        )
