import json
import os
from pathlib import Path

import numpy as np
import pytest

from matconvert.cli import main
from matconvert.convert import CSV_HEADER, ConversionError, convert

from conftest import (
    dataset_to_container,
    impedance_entry,
    phase_entry,
    simple_pair,
    write_container,
)


def test_basic_conversion(two_cycle_mat, tmp_path):
    out = tmp_path / "out.csv"
    report = convert(two_cycle_mat, out)
    assert report.cell_id == "CELLX"
    assert report.cycles_emitted == 4  # 2 pairs = 4 entries
    assert report.cycles_dropped == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 4 * 6  # 4 phases x 6 samples
    # every discharge row of a cycle carries that cycle's capacity
    dis_rows = [l for l in lines[1:] if l.split(",")[1] == "discharge"]
    caps = {l.split(",")[0]: l.split(",")[-1] for l in dis_rows}
    assert caps == {"1": "1.8", "2": "1.7"}
    charge_rows = [l for l in lines[1:] if l.split(",")[1] == "charge"]
    assert all(l.endswith(",") for l in charge_rows)  # capacity empty


def test_impedance_entries_skipped(tmp_path):
    c1, d1 = simple_pair()
    mat = write_container(
        tmp_path / "C.mat", "C", [c1, impedance_entry(), d1, impedance_entry()]
    )
    report = convert(mat, tmp_path / "c.csv")
    assert report.impedance_skipped == 2
    assert report.cycles_emitted == 2
    assert report.cycles_dropped == 0


def test_unknown_type_dropped_not_fatal(tmp_path):
    c1, d1 = simple_pair()
    weird = phase_entry(
        "charge", np.arange(4) * 10.0, np.full(4, 4.0), np.full(4, 1.0),
        np.full(4, 24.0) + np.arange(4) * 0.1, np.full(4, 4.0), np.full(4, 1.0),
    )
    weird[0]["type"] = "calibration"
    mat = write_container(tmp_path / "C.mat", "C", [weird, c1, d1])
    report = convert(mat, tmp_path / "c.csv")
    assert report.cycles_emitted == 2
    assert (0, "unknown cycle type 'calibration'") in report.drop_reasons


def test_missing_capacity_drops_pair(tmp_path):
    c1, d1 = simple_pair()
    c2, _ = simple_pair(cycle_seed=3)
    d_nocap = phase_entry(
        "discharge", np.arange(5) * 10.0, np.linspace(4.0, 3.0, 5), np.full(5, -2.0),
        np.linspace(24, 29, 5), np.linspace(3.95, 2.95, 5), np.full(5, -2.0),
        capacity=np.array([]),
    )
    mat = write_container(tmp_path / "C.mat", "C", [c1, d1, c2, d_nocap])
    report = convert(mat, tmp_path / "c.csv")
    assert report.cycles_emitted == 2
    reasons = dict(report.drop_reasons)
    assert reasons[3] == "missing capacity"
    assert reasons[2] == "missing discharge phase"
    assert report.cycles_emitted + report.cycles_dropped == 4


def test_unpaired_charge_dropped(tmp_path):
    c1, d1 = simple_pair()
    c_extra, _ = simple_pair(cycle_seed=4)
    mat = write_container(tmp_path / "C.mat", "C", [c_extra, c1, d1])
    report = convert(mat, tmp_path / "c.csv")
    assert report.cycles_emitted == 2
    assert (0, "missing discharge phase") in report.drop_reasons


def test_discharge_without_charge_dropped(tmp_path):
    c1, d1 = simple_pair()
    _, d_orphan = simple_pair(cycle_seed=5)
    mat = write_container(tmp_path / "C.mat", "C", [d_orphan, c1, d1])
    report = convert(mat, tmp_path / "c.csv")
    assert report.cycles_emitted == 2
    assert (0, "missing charge phase") in report.drop_reasons


def test_duplicate_timestamps_deduplicated(tmp_path):
    t = np.array([0.0, 10.0, 10.0, 20.0, 30.0])
    charge = phase_entry(
        "charge", t, np.linspace(3.8, 4.2, 5), np.full(5, 1.5),
        np.linspace(24, 25, 5), np.linspace(3.85, 4.25, 5), np.full(5, 1.5),
    )
    discharge = phase_entry(
        "discharge", np.arange(5) * 10.0, np.linspace(4.1, 3.0, 5), np.full(5, -2.0),
        np.linspace(24, 30, 5), np.linspace(4.05, 2.95, 5), np.full(5, -2.0),
        capacity=1.8,
    )
    mat = write_container(tmp_path / "C.mat", "C", [charge, discharge])
    report = convert(mat, tmp_path / "c.csv")
    assert report.cycles_emitted == 2
    lines = (tmp_path / "c.csv").read_text().strip().splitlines()
    charge_t = [float(l.split(",")[2]) for l in lines[1:] if l.split(",")[1] == "charge"]
    assert charge_t == [0.0, 10.0, 20.0, 30.0]


def test_renumbering_recorded(tmp_path):
    c1, d1 = simple_pair()
    c2, d2 = simple_pair(1.7, cycle_seed=6)
    mat = write_container(
        tmp_path / "C.mat", "C", [impedance_entry(), c1, d1, impedance_entry(), c2, d2]
    )
    report = convert(mat, tmp_path / "c.csv")
    assert report.renumbering == [
        {"cycle_index": 1, "source_charge": 1, "source_discharge": 2},
        {"cycle_index": 2, "source_charge": 4, "source_discharge": 5},
    ]


def test_reconversion_byte_identical(two_cycle_mat, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    convert(two_cycle_mat, a)
    convert(two_cycle_mat, b)
    assert a.read_bytes() == b.read_bytes()


def test_unreadable_container_fatal(tmp_path):
    bad = tmp_path / "bad.mat"
    bad.write_bytes(b"this is not a mat file")
    with pytest.raises(ConversionError):
        convert(bad, tmp_path / "out.csv")


def test_cli_with_report(two_cycle_mat, tmp_path, capsys):
    out = tmp_path / "o.csv"
    rep = tmp_path / "r.json"
    assert main([str(two_cycle_mat), str(out), "--report", str(rep)]) == 0
    assert "2 cycle pairs" in capsys.readouterr().out
    d = json.loads(rep.read_text())
    assert d["cell_id"] == "CELLX"
    assert d["cycles_emitted"] == 4
    assert d["cycles_emitted"] + d["cycles_dropped"] == 4


def test_cli_unreadable_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.mat"
    bad.write_bytes(b"nope")
    assert main([str(bad), str(tmp_path / "o.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_four_cells_convert_and_ingest(tmp_path):
    """Acceptance: four containers convert to schema-valid CSVs that the
    primary package loads without validation errors; reconversion is
    byte-identical. Runs on measured containers when provided (SOH_DATA_DIR),
    otherwise on synthetic stand-ins wrapped in the same container layout."""
    sohkit = pytest.importorskip("sohkit")
    from sohkit.ingest import load_cell_csv
    from sohkit.synth import make_twin_cells

    data_dir = Path(os.environ.get("SOH_DATA_DIR", "data"))
    real = {
        cell: data_dir / f"{cell}.mat"
        for cell in ("B0005", "B0006", "B0007", "B0018")
        if (data_dir / f"{cell}.mat").exists()
    }
    if real:
        containers = real
        print(f"\nconverting measured containers: {sorted(real)}")
    else:
        containers = {}
        for cell_id, ds in make_twin_cells().items():
            containers[cell_id] = dataset_to_container(ds, tmp_path / f"{cell_id}.mat")

    for cell_id, mat in containers.items():
        out = tmp_path / f"{cell_id}.csv"
        report = convert(mat, out)
        assert report.cycles_emitted > 0
        ds = load_cell_csv(out)
        assert len(ds) == report.cycles_emitted // 2
        out2 = tmp_path / f"{cell_id}_again.csv"
        convert(mat, out2)
        assert out.read_bytes() == out2.read_bytes()


def test_round_trip_values_preserved(tmp_path):
    """Sample values pass through conversion unrounded."""
    sohkit = pytest.importorskip("sohkit")
    from sohkit.ingest import load_cell_csv
    from sohkit.synth import make_cell

    ds = make_cell("RT1", n_cycles=6, seed=77)
    mat = dataset_to_container(ds, tmp_path / "RT1.mat")
    out = tmp_path / "RT1.csv"
    convert(mat, out)
    back = load_cell_csv(out)
    assert len(back) == len(ds)
    for (c0, d0), (c1, d1) in zip(ds.cycles, back.cycles):
        assert np.array_equal(c0.v_measured, c1.v_measured)
        assert np.array_equal(d0.temp, d1.temp)
        assert np.array_equal(d0.t, d1.t)
        assert d0.measured_capacity == d1.measured_capacity
