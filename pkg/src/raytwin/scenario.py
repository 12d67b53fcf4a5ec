"""Scenario file assembly: one TOML file configures every subsystem.

Sections: [materials], [[buildings]], [vehicle_classes], [ground] (scene),
[mobility] (update gating), [tracer] (ray engine), [stochastic] (baseline
channel), [rats.*] (spectral descriptors), [radios.*] (MAC/PHY profiles),
[coexistence] (interference knobs), [fleet] (per-vehicle RAT and class),
[traffic] (beacon flows).  All lengths meters, times seconds, angles
radians, frequencies Hz unless a key name says otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .coexistence import G_THR_DEFAULT_DB, NOISE_DENSITY_DEFAULT_DBM_HZ, RatSpec
from .errors import ParseError
from .linksim import RadioProfile
from .mobility import GatingConfig
from .raychannel import TracerConfig
from .scene import Scene, parse_scenario, scene_from_dict
from .stochastic3gpp import StochasticParams

log = logging.getLogger("raytwin.scenario")


@dataclass
class TrafficConfig:
    cam_bytes: int = 300
    cpm_bytes: int = 800
    cpm_rate_hz: float = 1.0
    cam_tick: float = 0.01  # CAM trigger-check period
    enable_cpm: bool = True


@dataclass
class FleetEntry:
    vehicle_id: int
    rat_id: str
    vehicle_class: str


@dataclass
class ScenarioConfig:
    scene: Scene
    rats: dict  # rat_id -> RatSpec
    radios: dict  # rat_id -> RadioProfile
    fleet: dict  # vehicle_id -> FleetEntry
    gating: GatingConfig
    tracer: TracerConfig
    stochastic: StochasticParams
    traffic: TrafficConfig
    g_thr_db: float = G_THR_DEFAULT_DB
    noise_density_dbm_hz: float = NOISE_DENSITY_DEFAULT_DBM_HZ
    injected_los: bool = False
    raw: dict = field(default_factory=dict)

    def rat_of(self, vehicle_id: int) -> RatSpec:
        return self.rats[self.fleet[vehicle_id].rat_id]

    def radio_of(self, vehicle_id: int) -> RadioProfile:
        return self.radios[self.fleet[vehicle_id].rat_id]


def _rat_specs(data: dict) -> dict:
    rats = {}
    for rat_id, spec in data.get("rats", {}).items():
        try:
            rats[rat_id] = RatSpec(
                rat_id=rat_id,
                fc=float(spec["fc"]),
                bandwidth=float(spec["bandwidth"]),
                subcarrier_spacing=float(spec.get("subcarrier_spacing", 60e3)),
                slot_duration=float(spec.get("slot_duration", 0.25e-3)),
            )
        except KeyError as exc:
            raise ParseError(f"[rats.{rat_id}] missing key {exc}") from None
    return rats


def _radio_profiles(data: dict, rats: dict) -> dict:
    defaults = {
        "dsrc": dict(mac="csma_ca", data_rate=3e6),
        "nr_v2x": dict(mac="sidelink_random"),
        "lte_v2x": dict(mac="sidelink_random"),
    }
    radios = {}
    for rat_id, spec in data.get("radios", {}).items():
        kw = dict(defaults.get(rat_id, {}))
        kw.update({k: v for k, v in spec.items() if k != "rsrp_threshold_db"})
        if "rsrp_threshold_db" in spec:
            # Random selection is configured; the sensing threshold is unused.
            log.warning("[radios.%s] rsrp_threshold_db parsed but ignored "
                        "(resource selection is random)", rat_id)
            kw["rsrp_threshold_db"] = spec["rsrp_threshold_db"]
        if "slot_duration" not in kw and rat_id in rats:
            kw["slot_duration"] = rats[rat_id].slot_duration
        radios[rat_id] = RadioProfile(rat_id=rat_id, **kw)
    return radios


def _fleet(data: dict, rats: dict, scene: Scene) -> dict:
    fleet_sec = data.get("fleet", {})
    classes = fleet_sec.get("classes", {})
    default_class = classes.get("default", "passenger")
    fleet = {}
    for rat_id, ids in fleet_sec.items():
        if rat_id == "classes":
            continue
        if rat_id not in rats:
            raise ParseError(f"[fleet] references unknown RAT {rat_id!r}")
        for vid in ids:
            vid = int(vid)
            if vid in fleet:
                raise ParseError(f"[fleet] vehicle {vid} assigned twice")
            vclass = classes.get(str(vid), default_class)
            if vclass not in scene.vehicle_classes:
                raise ParseError(f"[fleet] vehicle {vid}: unknown class {vclass!r}")
            fleet[vid] = FleetEntry(vid, rat_id, vclass)
    return fleet


def load_scenario(path) -> ScenarioConfig:
    data = parse_scenario(path)
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    scene = scene_from_dict(data)
    rats = _rat_specs(data)
    radios = _radio_profiles(data, rats)
    for rat_id in rats:
        if rat_id not in radios:
            raise ParseError(f"[radios.{rat_id}] section missing")
    fleet = _fleet(data, rats, scene)

    mob = data.get("mobility", {})
    gating = GatingConfig(delta_d0=float(mob.get("delta_d0", 1.0)),
                          fc=float(mob.get("fc", 5.89e9)))

    trc = data.get("tracer", {})
    tracer = TracerConfig(
        fc=float(trc.get("fc", 5.89e9)),
        max_interactions=int(trc.get("max_interactions", 3)),
        enable_diffraction=bool(trc.get("enable_diffraction", True)),
        gain_floor_db=float(trc.get("gain_floor_db", 40.0)),
    )

    sto = data.get("stochastic", {})
    stochastic = StochasticParams(
        fc=float(sto.get("fc", tracer.fc)),
        los_exponent=float(sto.get("los_exponent", 2.0)),
        nlos_excess_db=float(sto.get("nlos_excess_db", 15.0)),
        shadow_sigma_los_db=float(sto.get("shadow_sigma_los_db", 3.0)),
        shadow_sigma_nlos_db=float(sto.get("shadow_sigma_nlos_db", 4.0)),
    )

    coex = data.get("coexistence", {})
    tfc = data.get("traffic", {})
    traffic = TrafficConfig(
        cam_bytes=int(tfc.get("cam_bytes", 300)),
        cpm_bytes=int(tfc.get("cpm_bytes", 800)),
        cpm_rate_hz=float(tfc.get("cpm_rate_hz", 1.0)),
        cam_tick=float(tfc.get("cam_tick", 0.01)),
        enable_cpm=bool(tfc.get("enable_cpm", True)),
    )

    return ScenarioConfig(
        scene=scene, rats=rats, radios=radios, fleet=fleet,
        gating=gating, tracer=tracer, stochastic=stochastic, traffic=traffic,
        g_thr_db=float(coex.get("g_thr_db", G_THR_DEFAULT_DB)),
        noise_density_dbm_hz=float(coex.get("noise_density_dbm_hz",
                                            NOISE_DENSITY_DEFAULT_DBM_HZ)),
        injected_los=bool(sto.get("injected_los", False)),
        raw=data,
    )
