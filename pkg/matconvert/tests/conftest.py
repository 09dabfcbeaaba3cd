import numpy as np
import pytest
from scipy.io import savemat

DATA_DT = {
    "charge": np.dtype(
        [("Voltage_measured", "O"), ("Current_measured", "O"),
         ("Temperature_measured", "O"), ("Current_charge", "O"),
         ("Voltage_charge", "O"), ("Time", "O")]
    ),
    "discharge": np.dtype(
        [("Voltage_measured", "O"), ("Current_measured", "O"),
         ("Temperature_measured", "O"), ("Current_load", "O"),
         ("Voltage_load", "O"), ("Time", "O"), ("Capacity", "O")]
    ),
    "impedance": np.dtype(
        [("Sense_current", "O"), ("Battery_current", "O"), ("Battery_impedance", "O")]
    ),
}

CYCLE_DT = np.dtype(
    [("type", "O"), ("ambient_temperature", "O"), ("time", "O"), ("data", "O")]
)


def phase_entry(phase, t, v, i, temp, v_side, i_side, capacity=None, ambient=24.0):
    """One cycle entry in the source container layout."""
    data = np.zeros((1,), dtype=DATA_DT[phase])
    if phase == "charge":
        data[0] = (v, i, temp, i_side, v_side, t)
    else:
        data[0] = (v, i, temp, i_side, v_side, t, capacity)
    entry = np.zeros((1,), dtype=CYCLE_DT)
    entry[0] = (phase, ambient, np.zeros(6), data)
    return entry


def impedance_entry(ambient=24.0):
    data = np.zeros((1,), dtype=DATA_DT["impedance"])
    data[0] = (np.ones(4), np.ones(4), np.ones(4) * (0.1 + 0.05j))
    entry = np.zeros((1,), dtype=CYCLE_DT)
    entry[0] = ("impedance", ambient, np.zeros(6), data)
    return entry


def simple_pair(capacity=1.8, n=6, t_step=10.0, cycle_seed=0):
    rng = np.random.default_rng(cycle_seed)
    t = np.arange(n) * t_step
    charge = phase_entry(
        "charge", t, np.linspace(3.8, 4.2, n), np.full(n, 1.5),
        np.linspace(24, 25, n) + rng.normal(0, 0.01, n),
        np.linspace(3.85, 4.25, n), np.full(n, 1.5),
    )
    discharge = phase_entry(
        "discharge", t, np.linspace(4.1, 3.0, n), np.full(n, -2.0),
        np.linspace(24, 30, n) + rng.normal(0, 0.01, n),
        np.linspace(4.05, 2.95, n), np.full(n, -2.0), capacity=capacity,
    )
    return charge, discharge


def write_container(path, cell_id, entries):
    savemat(str(path), {cell_id: {"cycle": np.concatenate(entries)}})
    return path


def dataset_to_container(ds, path):
    """Wrap a sohkit CellDataset into the source container layout,
    interleaving an impedance entry every few cycles."""
    entries = []
    for k, (charge, discharge) in enumerate(ds.cycles):
        entries.append(
            phase_entry(
                "charge", charge.t, charge.v_measured, charge.i_measured,
                charge.temp, charge.v_load, charge.i_load,
            )
        )
        if k % 5 == 2:
            entries.append(impedance_entry())
        entries.append(
            phase_entry(
                "discharge", discharge.t, discharge.v_measured, discharge.i_measured,
                discharge.temp, discharge.v_load, discharge.i_load,
                capacity=discharge.measured_capacity,
            )
        )
    return write_container(path, ds.cell_id, entries)


@pytest.fixture()
def two_cycle_mat(tmp_path):
    c1, d1 = simple_pair(1.8, cycle_seed=1)
    c2, d2 = simple_pair(1.7, cycle_seed=2)
    return write_container(tmp_path / "CELLX.mat", "CELLX", [c1, d1, c2, d2])
