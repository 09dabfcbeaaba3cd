import os
from pathlib import Path

import numpy as np
import pytest

from sohkit.ingest import CellDataset, CycleRecord, load_cell_csv
from sohkit.synth import make_cell, make_twin_cells

# Converted lab data is looked up under SOH_DATA_DIR (or ./data) as
# <cell>.csv. Tests locked to measured values skip when it is absent.
REAL_CELLS = ("B0005", "B0006", "B0007", "B0018")


def real_data_dir() -> Path:
    return Path(os.environ.get("SOH_DATA_DIR", Path(__file__).resolve().parents[1] / "data"))


def load_real_cell(cell_id: str):
    path = real_data_dir() / f"{cell_id}.csv"
    if not path.exists():
        return None
    return load_cell_csv(path)


@pytest.fixture(scope="session")
def twins() -> dict[str, CellDataset]:
    return make_twin_cells()


@pytest.fixture(scope="session")
def twin5(twins) -> CellDataset:
    return twins["S0005"]


@pytest.fixture(scope="session")
def small_cell() -> CellDataset:
    return make_cell("SMALL", n_cycles=40, seed=3)


def make_pair(cycle: int, capacity: float = 1.8, n: int = 12, temps=None):
    """Minimal but valid (charge, discharge) pair for unit tests."""
    t = np.arange(n) * 10.0
    charge = CycleRecord(
        cycle_index=cycle,
        phase="charge",
        t=t,
        v_measured=np.linspace(3.8, 4.2, n),
        i_measured=np.full(n, 1.5),
        temp=np.linspace(24.0, 25.0, n),
        v_load=np.linspace(3.85, 4.25, n),
        i_load=np.full(n, 1.5),
    )
    dis_temp = np.asarray(temps, dtype=float) if temps is not None else np.linspace(24.0, 30.0, n)
    discharge = CycleRecord(
        cycle_index=cycle,
        phase="discharge",
        t=np.arange(len(dis_temp)) * 10.0,
        v_measured=np.linspace(4.1, 3.0, len(dis_temp)),
        i_measured=np.full(len(dis_temp), -2.0),
        temp=dis_temp,
        v_load=np.linspace(4.05, 2.95, len(dis_temp)),
        i_load=np.full(len(dis_temp), -2.0),
        measured_capacity=capacity,
    )
    return charge, discharge


def make_dataset(capacities, cell_id="T0001"):
    cycles = [make_pair(i + 1, cap) for i, cap in enumerate(capacities)]
    return CellDataset(cell_id=cell_id, cycles=cycles)
