"""Load per-cycle battery telemetry from canonical CSV files.

Canonical schema (one file per cell, header required, '.' decimal separator):

    cycle_index,phase,t_s,v_measured_V,i_measured_A,temp_C,v_load_V,i_load_A,capacity_Ah

`phase` is 'charge' or 'discharge'; `capacity_Ah` is repeated on every
discharge row and empty on charge rows; rows are sorted by
(cycle_index, phase, t_s). Numeric fields are written with shortest
round-trip formatting so save/load is bit-exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, ValidationError

CSV_HEADER = [
    "cycle_index",
    "phase",
    "t_s",
    "v_measured_V",
    "i_measured_A",
    "temp_C",
    "v_load_V",
    "i_load_A",
    "capacity_Ah",
]

PHASES = ("charge", "discharge")


@dataclass(frozen=True)
class CycleRecord:
    """Time-stamped samples for one charge or discharge phase of one cycle.

    All five sample arrays share the length of `t`; `t` is strictly
    increasing and starts at 0. Discharge records carry the measured
    capacity in Ah.
    """

    cycle_index: int
    phase: str
    t: np.ndarray
    v_measured: np.ndarray
    i_measured: np.ndarray
    temp: np.ndarray
    v_load: np.ndarray
    i_load: np.ndarray
    measured_capacity: Optional[float] = None

    def validate(self) -> None:
        if self.cycle_index < 1:
            raise ValidationError(f"cycle_index must be positive, got {self.cycle_index}")
        if self.phase not in PHASES:
            raise ValidationError(f"unknown phase {self.phase!r}, cycle {self.cycle_index}")
        n = len(self.t)
        if n < 2:
            raise ValidationError(
                f"need at least 2 samples, got {n} ({self.phase}, cycle {self.cycle_index})"
            )
        for name in ("v_measured", "i_measured", "temp", "v_load", "i_load"):
            if len(getattr(self, name)) != n:
                raise ValidationError(
                    f"sample array {name} has length {len(getattr(self, name))}, "
                    f"expected {n} ({self.phase}, cycle {self.cycle_index})"
                )
        if self.t[0] != 0.0:
            raise ValidationError(
                f"t must start at 0, got {self.t[0]} ({self.phase}, cycle {self.cycle_index})"
            )
        if not np.all(np.diff(self.t) > 0):
            raise ValidationError(
                f"t not strictly increasing ({self.phase}, cycle {self.cycle_index})"
            )
        if self.phase == "discharge":
            if self.measured_capacity is None:
                raise ValidationError(f"missing capacity, cycle {self.cycle_index}")
            if not self.measured_capacity > 0:
                raise ValidationError(
                    f"capacity must be > 0, got {self.measured_capacity}, cycle {self.cycle_index}"
                )

    @property
    def duration(self) -> float:
        return float(self.t[-1])


@dataclass(frozen=True)
class CellDataset:
    """Ordered (charge, discharge) record pairs for one cell."""

    cell_id: str
    cycles: list[tuple[CycleRecord, CycleRecord]]
    nominal_capacity: float = 2.0

    def validate(self) -> None:
        prev = 0
        for charge, discharge in self.cycles:
            if charge.phase != "charge" or discharge.phase != "discharge":
                raise ValidationError(
                    f"pair for cycle {charge.cycle_index} must be (charge, discharge)"
                )
            if charge.cycle_index != discharge.cycle_index:
                raise ValidationError(
                    f"pair indices differ: {charge.cycle_index} vs {discharge.cycle_index}"
                )
            if charge.cycle_index <= prev:
                raise ValidationError(
                    f"cycle_index not strictly increasing at {charge.cycle_index}"
                )
            prev = charge.cycle_index
            charge.validate()
            discharge.validate()

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def cycle_indices(self) -> np.ndarray:
        return np.array([d.cycle_index for _, d in self.cycles], dtype=int)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([d.measured_capacity for _, d in self.cycles], dtype=float)


@dataclass(frozen=True)
class SohSeries:
    """State-of-health per discharge cycle, normalized to the first
    discharge capacity (not the nominal capacity)."""

    cycle_index: np.ndarray
    soh: np.ndarray
    initial_capacity: Optional[float] = None

    def __len__(self) -> int:
        return len(self.cycle_index)


def _parse_float(text: str, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"line {line_no}: bad value {text!r} in column {column}") from None


def load_cell_csv(path: str | Path) -> CellDataset:
    """Load a canonical per-cell CSV into a validated CellDataset.

    Rows are grouped by (cycle_index, phase) and must alternate into
    complete charge/discharge pairs. Raises ParseError for malformed
    rows (naming the line) and ValidationError for invariant breaks
    (non-monotone time, missing capacity, missing phase).
    """
    path = Path(path)
    groups: dict[tuple[int, str], dict[str, list]] = {}
    order: list[tuple[int, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"line 1: {path.name} is empty") from None
        if header != CSV_HEADER:
            raise ParseError(f"line 1: bad header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"line {line_no}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                cyc = int(row[0])
            except ValueError:
                raise ParseError(f"line {line_no}: bad cycle_index {row[0]!r}") from None
            phase = row[1]
            if phase not in PHASES:
                raise ParseError(f"line {line_no}: bad phase {phase!r}")
            key = (cyc, phase)
            if key not in groups:
                groups[key] = {k: [] for k in ("t", "v", "i", "temp", "vl", "il", "cap")}
                order.append(key)
            g = groups[key]
            g["t"].append(_parse_float(row[2], line_no, "t_s"))
            g["v"].append(_parse_float(row[3], line_no, "v_measured_V"))
            g["i"].append(_parse_float(row[4], line_no, "i_measured_A"))
            g["temp"].append(_parse_float(row[5], line_no, "temp_C"))
            g["vl"].append(_parse_float(row[6], line_no, "v_load_V"))
            g["il"].append(_parse_float(row[7], line_no, "i_load_A"))
            if phase == "discharge":
                if row[8] == "":
                    raise ValidationError(f"missing capacity, cycle {cyc} (line {line_no})")
                g["cap"].append(_parse_float(row[8], line_no, "capacity_Ah"))
            elif row[8] != "":
                raise ParseError(f"line {line_no}: capacity_Ah must be empty on charge rows")

    records: dict[tuple[int, str], CycleRecord] = {}
    for (cyc, phase), g in groups.items():
        cap = None
        if phase == "discharge":
            caps = set(g["cap"])
            if len(caps) != 1:
                raise ValidationError(f"inconsistent capacity values, cycle {cyc}")
            cap = caps.pop()
        rec = CycleRecord(
            cycle_index=cyc,
            phase=phase,
            t=np.asarray(g["t"], dtype=float),
            v_measured=np.asarray(g["v"], dtype=float),
            i_measured=np.asarray(g["i"], dtype=float),
            temp=np.asarray(g["temp"], dtype=float),
            v_load=np.asarray(g["vl"], dtype=float),
            i_load=np.asarray(g["il"], dtype=float),
            measured_capacity=cap,
        )
        records[(cyc, phase)] = rec

    indices = sorted({cyc for cyc, _ in records})
    pairs = []
    for cyc in indices:
        charge = records.get((cyc, "charge"))
        discharge = records.get((cyc, "discharge"))
        if charge is None:
            raise ValidationError(f"missing charge phase, cycle {cyc}")
        if discharge is None:
            raise ValidationError(f"missing discharge phase, cycle {cyc}")
        pairs.append((charge, discharge))

    ds = CellDataset(cell_id=path.stem, cycles=pairs)
    ds.validate()
    return ds


def save_cell_csv(ds: CellDataset, path: str | Path) -> None:
    """Write a CellDataset back to the canonical schema.

    Floats are formatted with repr (shortest round-trip), so
    load(save(ds)) reproduces every numeric field bit-exactly.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for charge, discharge in ds.cycles:
            for rec in (charge, discharge):
                cap = "" if rec.measured_capacity is None else repr(float(rec.measured_capacity))
                for j in range(len(rec.t)):
                    writer.writerow(
                        [
                            rec.cycle_index,
                            rec.phase,
                            repr(float(rec.t[j])),
                            repr(float(rec.v_measured[j])),
                            repr(float(rec.i_measured[j])),
                            repr(float(rec.temp[j])),
                            repr(float(rec.v_load[j])),
                            repr(float(rec.i_load[j])),
                            cap,
                        ]
                    )


def compute_soh(ds: CellDataset) -> SohSeries:
    """SOH per discharge cycle: capacity divided by the first discharge
    cycle's capacity (soh[0] is exactly 1.0)."""
    if len(ds.cycles) < 1:
        raise ValidationError("dataset has no discharge cycles")
    caps = ds.capacities
    initial = float(caps[0])
    soh = caps / initial
    if np.any(soh <= 0) or np.any(soh > 1.2):
        bad = int(ds.cycle_indices[np.argmax((soh <= 0) | (soh > 1.2))])
        raise ValidationError(f"soh outside (0, 1.2] at cycle {bad}")
    return SohSeries(cycle_index=ds.cycle_indices, soh=soh, initial_capacity=initial)


def eol_cycle(s: SohSeries, threshold: float = 0.8) -> Optional[int]:
    """First cycle_index where SOH drops below `threshold`, or None."""
    if not 0 < threshold < 1.2:
        raise ValidationError(f"threshold must be in (0, 1.2), got {threshold}")
    below = np.nonzero(s.soh < threshold)[0]
    if len(below) == 0:
        return None
    return int(s.cycle_index[below[0]])
