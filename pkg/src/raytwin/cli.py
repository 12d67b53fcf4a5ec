"""Command-line front end.

Subcommands: run (one scenario -> records + metrics), validate (built-in
oracle suite), compare (ray vs stochastic disagreement report), bench
(fleet-size sweep of cache statistics), serve (datagram channel
responder).  The VN3T_LOG environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics, synthetic
from .constants import C_LIGHT
from .coexistence import RatSpec, TrackingObject, TransmissionTracker, build_grid, evaluate_sinr
from .mobility import GatingConfig, VehicleState, gate_update
from .raychannel import Antenna, ChannelSummary, TracerConfig, summarize, trace_paths
from .scene import Scene
from .sim import run_simulation
from .stochastic3gpp import p_los
from .twinlink import (ChanReq, ChanResp, InitPayload, Message, MsgType,
                       RemoteChannelService, ChannelServer, decode, encode)


def _setup_logging():
    level = os.environ.get("VN3T_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _parse_addr(text: str):
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


def _write_outputs(out_dir: Path, result, label: str = "") -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = f"_{label}" if label else ""
    metrics.write_records_csv(out_dir / f"records{suffix}.csv", result.records)
    sinr_values = [r.sinr_db for r in result.records if math.isfinite(r.sinr_db)]
    summary = {
        "channel": result.channel_tag,
        "coexistence": result.coexistence,
        "seed": result.seed,
        "packets": len(result.packets),
        "records": len(result.records),
        "prr": result.prr,
    }
    if sinr_values:
        hist = metrics.histogram(sinr_values, bin_width=1.0)
        metrics.write_sinr_hist_csv(out_dir / f"sinr_hist{suffix}.csv", hist)
        summary["sinr_modes"] = hist.modes
    if result.query_log:
        stats = result.run_stats()
        metrics.write_run_stats_csv(out_dir / f"run_stats{suffix}.csv",
                                    [(result.channel_tag, stats)])
        summary["cache_hit_ratio"] = stats.cache_hit_ratio
        summary["speedup_vs_no_cache"] = stats.speedup_vs_no_cache
    metrics.write_summary_json(out_dir / f"summary{suffix}.json", summary)
    return summary


def cmd_run(args) -> int:
    service = None
    if args.remote:
        service = RemoteChannelService(_parse_addr(args.remote), args.scenario)
    result = run_simulation(args.scenario, args.trace, seed=args.seed,
                            channel=args.channel, coexistence=args.coexistence == "on",
                            duration=args.duration, cache_enabled=not args.no_cache,
                            channel_service=service)
    if service is not None:
        service.close()
    summary = _write_outputs(Path(args.out), result)
    print(f"{len(result.packets)} packets, {len(result.records)} receptions, "
          f"PRR {summary['prr']:.3f} -> {args.out}")
    return 0


def cmd_compare(args) -> int:
    out = Path(args.out)
    runs = {}
    for channel in ("ray", "stochastic"):
        runs[channel] = run_simulation(args.scenario, args.trace, seed=args.seed,
                                       channel=channel, coexistence=True,
                                       duration=args.duration)
        _write_outputs(out, runs[channel], label=channel)
    dr_decode = metrics.disagreement_ratio(runs["ray"].decode_set(),
                                           runs["stochastic"].decode_set())
    dr_interf = metrics.disagreement_ratio(runs["ray"].interferer_set(),
                                           runs["stochastic"].interferer_set())
    report = {
        "decode_disagreement_ratio": dr_decode,
        "interferer_disagreement_ratio": dr_interf,
        "prr_ray": runs["ray"].prr,
        "prr_stochastic": runs["stochastic"].prr,
        "seed": args.seed,
    }
    metrics.write_summary_json(out / "compare.json", report)
    print(f"packet-reception DR {dr_decode:.4f}, interferer DR {dr_interf:.4f} -> {out}")
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fleets = [int(f) for f in args.fleets.split(",")]
    rows = []
    for n in fleets:
        cfg = synthetic.crossroad_scenario(n)
        trace = synthetic.crossroad_trace(n, duration=args.duration)
        result = run_simulation(cfg, trace, seed=args.seed, channel="ray")
        stats = result.run_stats()
        rows.append((f"{n}", stats))
        print(f"{n:>3} vehicles: hit {stats.cache_hit_ratio:.4f}, "
              f"speedup {stats.speedup_vs_no_cache:.1f}x, "
              f"mean {stats.trace_mean_cost_ms:.2f} ms, p95 {stats.trace_p95_ms:.2f} ms")
    metrics.write_run_stats_csv(out / "run_stats.csv", rows)
    hit_ratios = [st.cache_hit_ratio for _, st in rows]
    if all(b >= a for a, b in zip(hit_ratios, hit_ratios[1:])):
        print("cache hit ratio is non-decreasing with fleet size")
    return 0


def cmd_serve(args) -> int:
    server = ChannelServer(_parse_addr(args.bind), args.scenario)
    print(f"channel responder on {server.address} (ctrl-c to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


# ---------------------------------------------------------------------------
# validate: built-in oracle/property spot checks
# ---------------------------------------------------------------------------

def _check_friis():
    scene = Scene()
    cfg = TracerConfig(fc=5.89e9, max_interactions=0, enable_diffraction=False)
    ps = trace_paths(scene, None, Antenna((0, 0, 1.8)), Antenna((100, 0, 1.8)), cfg)
    g_db = 10 * math.log10(summarize(ps).total_gain)
    return abs(g_db - (-87.85)) < 0.01, f"free-space gain {g_db:.3f} dB"


def _check_p_los():
    ok = (p_los(10.0) == 1.0 and abs(p_los(36.0) - 0.68394) < 1e-5
          and abs(p_los(1000.0) - 0.0180) < 1e-4)
    return ok, f"p_los(36)={p_los(36.0):.5f}"


def _check_image_method():
    rng = np.random.default_rng(42)
    cfg = TracerConfig(max_interactions=1, enable_diffraction=False)
    worst = 0.0
    for _ in range(20):
        y_wall = rng.uniform(5, 40)
        scene = Scene(static_surfaces=[_wall(y_wall)], material_table=None or {})
        scene.__post_init__()
        tx = Antenna((rng.uniform(-20, 20), 0.0, 1.8))
        rx = Antenna((rng.uniform(-20, 20), rng.uniform(0, y_wall - 1), 1.6))
        ps = trace_paths(scene, None, tx, rx, cfg)
        refl = [p for p in ps.paths if p.kind == "reflection"]
        if not refl:
            return False, "no reflection found"
        mirror = np.array(rx.position) * [1, 1, 1]
        mirror[1] = 2 * y_wall - mirror[1]
        expect = float(np.linalg.norm(mirror - np.array(tx.position)))
        worst = max(worst, abs(refl[0].delay * C_LIGHT - expect))
    return worst < 1e-6, f"max image-length error {worst:.2e} m"


def _wall(y: float):
    from .scene import Surface
    return Surface.from_polygon([(-60, y, 0), (60, y, 0), (60, y, 25), (-60, y, 25)],
                                "concrete")


def _check_dr():
    from .metrics import DecisionSet, disagreement_ratio
    a = DecisionSet.of("a", {"a", "b"})
    b = DecisionSet.of("b", {"a"})
    ok = (disagreement_ratio(a, a) == 0.0
          and disagreement_ratio(a, DecisionSet.of("c", {"x", "y"})) == 1.0
          and disagreement_ratio(a, b) == 0.5)
    return ok, "identity/disjoint/hand-example"


def _check_codec():
    rng = np.random.default_rng(7)
    for i in range(1000):
        state = VehicleState(int(rng.integers(0, 1000)), float(rng.uniform(0, 100)),
                             tuple(rng.uniform(-500, 500, 3)),
                             tuple(rng.uniform(-40, 40, 3)), float(rng.uniform(-3, 3)))
        msg = Message(MsgType.LOC_UPDATE, i + 1, state)
        if decode(encode(msg)) != msg:
            return False, "round-trip mismatch"
    crashes = 0
    for i in range(10_000):
        blob = rng.bytes(int(rng.integers(0, 64)))
        try:
            decode(blob)
        except Exception as exc:  # noqa: BLE001
            from .errors import FrameError
            if not isinstance(exc, FrameError):
                crashes += 1
    return crashes == 0, f"{crashes} non-FrameError crashes in fuzz"


def _check_gate():
    cfg1 = GatingConfig(delta_d0=1.0, fc=0.423 * C_LIGHT / (20.0 * 0.005))
    s1 = VehicleState(1, 0.0, (0.5, 0, 0), (20, 0, 0), 0.0)
    cfg2 = GatingConfig(delta_d0=0.1, fc=0.423 * C_LIGHT / (30.0 * 0.02))
    s2a = VehicleState(1, 0.0, (0.5, 0, 0), (30, 0, 0), 0.0)
    s2b = VehicleState(1, 0.0, (0.7, 0, 0), (30, 0, 0), 0.0)
    ok = (gate_update(None, s1, cfg1)
          and not gate_update((0, 0, 0), s1, cfg1)
          and not gate_update((0, 0, 0), s2a, cfg2)
          and gate_update((0, 0, 0), s2b, cfg2))
    return ok, "threshold max(d0, v*tau)"


def _check_grid():
    rat = RatSpec("nr_v2x", 5.9e9, 10e6, 60e3, 0.25e-3)
    grid = build_grid([rat], horizon=0.01)
    n = int(grid.coverage["nr_v2x"].sum())
    width = grid.block_widths[grid.coverage["nr_v2x"]].sum()
    return (n == 167 and abs(width - 10e6) < 1.0), f"{n} blocks, {width:.0f} Hz"


def _check_sinr():
    rat_a = RatSpec("dsrc", 5.9e9, 10e6, 156.25e3, 1e-3)
    rat_b = RatSpec("nr_v2x", 5.9e9, 10e6, 60e3, 1e-3)
    grid = build_grid([rat_a, rat_b], horizon=0.01)
    tracker = TransmissionTracker()
    desired = tracker.register_tx(1, rat_a, 0.0, 1e-3, 1.0)
    gains = {1: 1e-9 / (1e-7 * 1e7)}
    noise = 1e-12 / 1e7

    def chan(tx, rx, t):
        return ChannelSummary(gains[tx], 0.0, 1)

    rep = evaluate_sinr(2, desired, grid, tracker, chan, g_thr=1e-30, noise_density=noise)
    ok1 = abs(rep.aggregate - 1000.0) < 1e-6
    gains[3] = 1e-10 / (1e-7 * 1e7)
    tracker.register_tx(3, rat_b, 0.0, 1e-3, 1.0)
    rep2 = evaluate_sinr(2, desired, grid, tracker, chan, g_thr=1e-30, noise_density=noise)
    ok2 = abs(rep2.aggregate - 1e-9 / (1e-12 + 1e-10)) < 1e-3
    return ok1 and ok2, f"clean {rep.aggregate:.1f}, interfered {rep2.aggregate:.3f}"


VALIDATE_CHECKS = [
    ("friis free-space gain", _check_friis),
    ("LoS probability curve", _check_p_los),
    ("image-method mirror lengths", _check_image_method),
    ("disagreement ratio cases", _check_dr),
    ("frame codec round-trip + fuzz", _check_codec),
    ("update gating thresholds", _check_gate),
    ("resource grid tiling", _check_grid),
    ("SINR hand values", _check_sinr),
]


def cmd_validate(args) -> int:
    failures = 0
    for name, check in VALIDATE_CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # noqa: BLE001
            ok, detail = False, f"raised {exc!r}"
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vn3t",
                                     description="multi-RAT V2V coexistence simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--trace", required=True)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--channel", choices=("ray", "stochastic"), default="ray")
    run.add_argument("--coexistence", choices=("on", "off"), default="on")
    run.add_argument("--out", default="out")
    run.add_argument("--remote", help="host:port of a remote channel responder")
    run.add_argument("--duration", type=float)
    run.add_argument("--no-cache", action="store_true")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="run the built-in oracle suite")
    val.set_defaults(func=cmd_validate)

    cmp_ = sub.add_parser("compare", help="ray vs stochastic disagreement report")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--trace", required=True)
    cmp_.add_argument("--seed", type=int, default=1)
    cmp_.add_argument("--out", default="out")
    cmp_.add_argument("--duration", type=float)
    cmp_.set_defaults(func=cmd_compare)

    bench = sub.add_parser("bench", help="fleet-size sweep of cache statistics")
    bench.add_argument("--fleets", default="5,10,20")
    bench.add_argument("--seed", type=int, default=1)
    bench.add_argument("--out", default="out")
    bench.add_argument("--duration", type=float, default=30.0)
    bench.set_defaults(func=cmd_bench)

    serve = sub.add_parser("serve", help="run the channel responder")
    serve.add_argument("--scenario", required=True)
    serve.add_argument("--bind", default="127.0.0.1:47311")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
