"""Deterministic synthetic cycling data in the canonical record layout.

Simulates cells run under the usual lab protocol (constant-current
charge at 1.5 A to 4.2 V, constant-voltage hold to 0.02 A; constant-
current discharge at 2.0 A to a per-cell voltage cutoff) with capacity
fade, occasional regeneration bumps, growing internal resistance,
self-heating that increases with age, and a slowly wandering ambient
temperature. Intended for tests, demos, and experiment dry-runs when no
converted lab data is on hand; the generator is seeded and pure, so any
fixture derived from it is reproducible.
"""

from __future__ import annotations

import numpy as np

from .ingest import CellDataset, CycleRecord

SAMPLE_DT = 10.0  # seconds


def _capacity_series(rng, n_cycles, q0, fade, shape, bump_every, bump_amp, noise):
    k = np.arange(n_cycles, dtype=float)
    base = q0 * (1.0 - fade * (k / max(n_cycles - 1, 1)) ** shape)
    bumps = np.zeros(n_cycles)
    if bump_every > 0:
        starts = np.arange(bump_every, n_cycles, bump_every, dtype=float)
        starts = starts + rng.integers(-4, 5, size=len(starts))
        for b in starts:
            after = k >= b
            bumps[after] += bump_amp * np.exp(-(k[after] - b) / 4.0)
    q = base * (1.0 + bumps) + rng.normal(0.0, noise * q0, size=n_cycles)
    return np.maximum(q, 0.05 * q0)


def _ambient_series(rng, n_cycles, base=24.0, rho=0.9, sigma=0.25):
    amb = np.empty(n_cycles)
    amb[0] = base + rng.normal(0.0, sigma)
    for k in range(1, n_cycles):
        amb[k] = base + rho * (amb[k - 1] - base) + rng.normal(0.0, sigma)
    return amb


def _discharge_record(rng, cycle, q, age, amb, cutoff_v):
    load_dur = 3600.0 * q / 2.0
    tail_dur = 120.0
    t = np.arange(0.0, load_dur + tail_dur, SAMPLE_DT)
    in_load = t <= load_dur

    soc = np.clip(1.0 - t / load_dur, 0.0, 1.0)
    ocv = 3.62 + 0.35 * np.tanh(2.2 * (soc - 0.5)) + 0.25 * (soc - 0.5) \
        - 0.45 * np.exp(-12.0 * soc)
    r_int = 0.045 + 0.055 * age
    v = ocv - 2.0 * r_int
    # Voltage rebounds toward OCV once the load drops out.
    v_end = v[in_load][-1]
    rebound = (ocv[-1] + 0.25) - v_end
    v = np.where(in_load, v, v_end + rebound * (1.0 - np.exp(-(t - load_dur) / 40.0)))
    v = np.maximum(v, cutoff_v - 0.45) + rng.normal(0.0, 0.003, size=len(t))

    i = np.where(in_load, -2.0, 0.0) + rng.normal(0.0, 0.004, size=len(t))

    heat = 7.5 + 6.0 * age
    u = np.clip(t / load_dur, 0.0, 1.0)
    temp_rise = heat * u**1.3
    tail_cool = np.where(in_load, 0.0, (t - load_dur) / tail_dur * 0.15 * heat)
    temp = amb + temp_rise - tail_cool + rng.normal(0.0, 0.05, size=len(t))

    v_load = np.where(in_load, v - 0.02, 0.0)
    v_load = np.maximum(v_load + rng.normal(0.0, 0.002, size=len(t)), 0.0)
    i_load = np.where(in_load, -2.0, 0.0)

    return CycleRecord(
        cycle_index=cycle,
        phase="discharge",
        t=t,
        v_measured=v,
        i_measured=i,
        temp=temp,
        v_load=v_load,
        i_load=i_load,
        measured_capacity=float(q),
    )


def _charge_record(rng, cycle, q, age, amb):
    frac_cc = 0.82 - 0.18 * age  # CC share of recharge shrinks with age
    t_cc = 3600.0 * q * frac_cc / 1.5
    tau_cv = 550.0 + 900.0 * age
    cv_dur = tau_cv * np.log(1.5 / 0.012)  # run past the 0.02 A cutoff
    t = np.arange(0.0, t_cc + cv_dur, SAMPLE_DT)
    in_cc = t < t_cc

    v0 = 3.72 + 0.12 * age
    v = np.where(
        in_cc,
        v0 + (4.2 - v0) * np.clip(t / t_cc, 0.0, 1.0) ** 0.75,
        4.2,
    ) + rng.normal(0.0, 0.0015, size=len(t))

    i = np.where(in_cc, 1.5, 1.5 * np.exp(-np.maximum(t - t_cc, 0.0) / tau_cv))
    i = i + rng.normal(0.0, 0.0015, size=len(t))

    heat = 1.2 + 1.8 * age
    temp = amb + 0.8 + heat * (1.0 - np.exp(-t / 1500.0)) \
        + rng.normal(0.0, 0.05, size=len(t))

    v_load = v + 0.04 + rng.normal(0.0, 0.002, size=len(t))
    i_load = i + 0.002

    return CycleRecord(
        cycle_index=cycle,
        phase="charge",
        t=t,
        v_measured=v,
        i_measured=i,
        temp=temp,
        v_load=v_load,
        i_load=i_load,
    )


def make_cell(
    cell_id: str,
    n_cycles: int = 168,
    seed: int = 42,
    initial_capacity: float = 1.86,
    fade: float = 0.32,
    fade_shape: float = 1.15,
    cutoff_v: float = 2.7,
    bump_every: int = 38,
    bump_amp: float = 0.008,
    capacity_noise: float = 0.0015,
) -> CellDataset:
    """Simulate one cell for n_cycles charge/discharge pairs."""
    rng = np.random.default_rng(seed)
    q = _capacity_series(
        rng, n_cycles, initial_capacity, fade, fade_shape, bump_every, bump_amp,
        capacity_noise,
    )
    amb = _ambient_series(rng, n_cycles)
    age = (initial_capacity - q) / (initial_capacity * max(fade, 1e-6))
    age = np.clip(age, 0.0, 1.2)

    cycles = []
    for k in range(n_cycles):
        charge = _charge_record(rng, k + 1, q[k], age[k], amb[k])
        discharge = _discharge_record(rng, k + 1, q[k], age[k], amb[k], cutoff_v)
        cycles.append((charge, discharge))
    ds = CellDataset(cell_id=cell_id, cycles=cycles, nominal_capacity=2.0)
    ds.validate()
    return ds


# Stand-ins shaped like the four lab cells (capacities, discharge cutoffs,
# cycle counts, and fade depths in the same ballpark), for running the
# experiment grid without converted data.
TWIN_PRESETS = {
    "S0005": dict(n_cycles=168, seed=1005, initial_capacity=1.856, fade=0.33, cutoff_v=2.7),
    "S0006": dict(n_cycles=168, seed=1006, initial_capacity=2.035, fade=0.44, cutoff_v=2.5),
    "S0007": dict(n_cycles=168, seed=1007, initial_capacity=1.891, fade=0.24, cutoff_v=2.2),
    "S0018": dict(n_cycles=132, seed=1018, initial_capacity=1.855, fade=0.28, cutoff_v=2.5),
}


def make_twin_cells() -> dict[str, CellDataset]:
    """The four preset stand-in cells, keyed by id."""
    return {cid: make_cell(cid, **params) for cid, params in TWIN_PRESETS.items()}
