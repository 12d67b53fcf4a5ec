"""Synthetic urban-crossroad scenarios and traces.

One parametric scenario family drives the demos, the benchmark sweep and
the acceptance suite: two perpendicular street canyons lined with
building slabs meeting at an open intersection.  Vehicles run along the
lanes at constant per-lane speeds, so same-street pairs are mostly LoS
(canyon reflections included) while cross-street pairs are NLoS away
from the junction; trucks mixed into the fleet create vehicular
blockage of the 1.8 m antenna rays.
"""

from __future__ import annotations

import csv

import numpy as np

from .mobility import TraceStore
from .scenario import ScenarioConfig, scenario_from_dict

LANE_OFFSET = 3.5  # m from the street centerline
LANE_SPEEDS = {("x", 1): 9.0, ("x", -1): 12.0, ("y", 1): 10.0, ("y", -1): 8.0}
VEHICLE_GAP = 40.0  # m between vehicles of one lane


def crossroad_scenario_dict(n_vehicles: int = 20, *, block_depth: float = 30.0,
                            block_height: float = 12.0, street_half: float = 520.0,
                            setback: float = 12.0, max_interactions: int = 1,
                            nlos_excess_db: float = 25.0, delta_d0: float = 2.0,
                            truck_every: int = 5, enable_cpm: bool = True) -> dict:
    """Scenario dict for an n-vehicle crossroad run (see module docstring)."""
    far = setback + block_depth
    end = street_half - 28.0
    buildings = []
    for sx in (1, -1):
        for sy in (1, -1):
            # L-shaped frontage per quadrant: one slab along each street.
            bx = sorted([sx * far, sx * end])
            by = sorted([sy * setback, sy * far])
            buildings.append({"footprint": [[bx[0], by[0]], [bx[1], by[0]],
                                            [bx[1], by[1]], [bx[0], by[1]]],
                              "height": block_height, "material": "concrete"})
            bx = sorted([sx * setback, sx * far])
            by = sorted([sy * setback, sy * end])
            buildings.append({"footprint": [[bx[0], by[0]], [bx[1], by[0]],
                                            [bx[1], by[1]], [bx[0], by[1]]],
                              "height": block_height, "material": "concrete"})

    ids = list(range(1, n_vehicles + 1))
    half = (n_vehicles + 1) // 2
    classes = {"default": "passenger"}
    if truck_every:
        for vid in ids[truck_every - 1::truck_every]:
            classes[str(vid)] = "truck"

    return {
        "ground": {"z": 0.0, "material": "concrete",
                   "extent": [-street_half - 80, -street_half - 80,
                              street_half + 80, street_half + 80]},
        "buildings": buildings,
        "vehicle_classes": {
            "passenger": {"half_extents": [2.2, 0.9, 0.75], "material": "metal",
                          "antenna_displacement": [0.0, 0.0, 1.8]},
            "truck": {"half_extents": [3.5, 1.25, 1.6], "material": "metal",
                      "antenna_displacement": [0.0, 0.0, 1.8]},
        },
        "mobility": {"delta_d0": delta_d0, "fc": 5.89e9},
        "tracer": {"fc": 5.89e9, "max_interactions": max_interactions,
                   "enable_diffraction": True, "gain_floor_db": 40.0},
        "stochastic": {"fc": 5.89e9, "los_exponent": 2.0,
                       "nlos_excess_db": nlos_excess_db,
                       "shadow_sigma_los_db": 3.0, "shadow_sigma_nlos_db": 4.0},
        "rats": {
            "dsrc": {"fc": 5.9e9, "bandwidth": 10e6,
                     "subcarrier_spacing": 156.25e3, "slot_duration": 0.25e-3},
            "nr_v2x": {"fc": 5.9e9, "bandwidth": 10e6,
                       "subcarrier_spacing": 60e3, "slot_duration": 0.25e-3},
        },
        "radios": {
            "dsrc": {"tx_power_dbm": 30.0, "sensitivity_dbm": -93.0,
                     "sinr_threshold_db": 10.0, "data_rate": 3e6, "mac": "csma_ca"},
            "nr_v2x": {"tx_power_dbm": 30.0, "sensitivity_dbm": -93.0,
                       "sinr_threshold_db": 10.0, "mac": "sidelink_random",
                       "mcs": 14, "reservation_period": 0.02,
                       "pssch_blocks": 10, "rsrp_threshold_db": 21.0},
        },
        "coexistence": {"g_thr_db": -140.0, "noise_density_dbm_hz": -165.0},
        "traffic": {"cam_bytes": 300, "cpm_bytes": 800, "cpm_rate_hz": 1.0,
                    "cam_tick": 0.01, "enable_cpm": enable_cpm},
        "fleet": {"dsrc": ids[:half], "nr_v2x": ids[half:],
                  "classes": classes},
    }


def crossroad_scenario(n_vehicles: int = 20, **kw) -> ScenarioConfig:
    return scenario_from_dict(crossroad_scenario_dict(n_vehicles, **kw))


def _vehicle_lane(idx: int):
    """Deterministic lane assignment: alternate streets, then directions."""
    street = "x" if idx % 2 == 0 else "y"
    direction = 1 if (idx // 2) % 2 == 0 else -1
    return street, direction


def crossroad_trace(n_vehicles: int = 20, duration: float = 60.0, dt: float = 1.0,
                    gap: float = VEHICLE_GAP) -> TraceStore:
    """Constant-speed lane traffic; platoons straddle the junction mid-run."""
    lanes = {}
    for idx in range(n_vehicles):
        lanes.setdefault(_vehicle_lane(idx), []).append(idx)

    series = {}
    times = np.arange(0.0, duration + dt / 2, dt)
    for lane, members in lanes.items():
        street, direction = lane
        v = LANE_SPEEDS[lane]
        for k, idx in enumerate(members):
            vid = idx + 1
            # Center the platoon on the junction at mid-run.
            s0 = -direction * v * duration / 2 + (k - (len(members) - 1) / 2) * gap * -direction
            s = s0 + direction * v * times
            lateral = LANE_OFFSET * (1 if direction > 0 else -1)
            if street == "x":
                pos = np.column_stack([s, np.full_like(s, lateral), np.zeros_like(s)])
                vel = np.tile([direction * v, 0.0, 0.0], (len(s), 1))
                heading = 0.0 if direction > 0 else np.pi
            else:
                pos = np.column_stack([np.full_like(s, -lateral), s, np.zeros_like(s)])
                vel = np.tile([0.0, direction * v, 0.0], (len(s), 1))
                heading = np.pi / 2 if direction > 0 else -np.pi / 2
            series[vid] = {"t": times.copy(), "pos": pos, "vel": vel,
                           "heading": np.full_like(times, heading)}
    return TraceStore(series)


def write_trace_csv(store: TraceStore, path) -> None:
    """Dump a TraceStore to the standard trace CSV format."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vehicle_id", "x", "y", "z", "vx", "vy", "vz", "heading"])
        rows = []
        for vid in store.vehicle_ids:
            s = store._series[vid]
            for i, t in enumerate(s["t"]):
                rows.append((float(t), vid, *s["pos"][i], *s["vel"][i], float(s["heading"][i])))
        rows.sort(key=lambda r: (r[0], r[1]))
        for r in rows:
            w.writerow([repr(r[0]), r[1]] + [repr(float(x)) for x in r[2:]])
