"""Post-processing: disagreement ratio, PRR, histograms, cache statistics.

All operations are pure functions over immutable record streams; the CSV
and JSON emitters at the bottom define the on-disk schemas.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import EmptySeries


@dataclass(frozen=True)
class DecisionSet:
    """A labeled set of positively-decided item identifiers."""

    label: str
    positives: frozenset

    @classmethod
    def of(cls, label: str, items) -> "DecisionSet":
        return cls(label, frozenset(items))


@dataclass
class RunStats:
    cache_hit_ratio: float
    trace_mean_cost_ms: float
    trace_p95_ms: float
    speedup_vs_no_cache: float

    def __post_init__(self):
        if not (0.0 <= self.cache_hit_ratio <= 1.0):
            raise ValueError("hit ratio out of [0, 1]")
        if self.trace_p95_ms < 0:
            raise ValueError("p95 must be >= 0")


def disagreement_ratio(r: DecisionSet, m: DecisionSet) -> float:
    """|symmetric difference| / |union|; 0 when both sets are empty."""
    union = r.positives | m.positives
    if not union:
        return 0.0
    return len(r.positives ^ m.positives) / len(union)


def prr(records, expected: int | None = None) -> float:
    """Decoded receptions over expected receptions.

    By default every record counts as one expected reception (the runner
    emits a record per in-range receiver, decoded or not).
    """
    records = list(records)
    total = len(records) if expected is None else expected
    if total == 0:
        return 0.0
    return sum(1 for r in records if r.decoded) / total


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    modes: int
    mode_bins: list = field(default_factory=list)


def histogram(values, bin_width: float = 1.0, prominence_frac: float = 0.05) -> Histogram:
    """Fixed-width binning plus mode counting.

    A mode is a local maximum whose prominence exceeds ``prominence_frac``
    of the tallest bin; the counts are zero-padded at both ends so edge
    peaks are counted too.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    vals = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if vals.size == 0:
        raise EmptySeries("no finite values to bin")
    lo = math.floor(vals.min() / bin_width) * bin_width
    hi = math.ceil(vals.max() / bin_width) * bin_width
    if hi <= lo:
        hi = lo + bin_width
    edges = np.arange(lo, hi + bin_width / 2, bin_width)
    counts, _ = np.histogram(vals, bins=edges)
    padded = np.concatenate([[0.0], counts.astype(float), [0.0]])
    floor = prominence_frac * counts.max()
    peaks, _ = find_peaks(padded, prominence=max(floor, 1e-12))
    mode_bins = [int(p - 1) for p in peaks]
    return Histogram(edges, counts, len(mode_bins), mode_bins)


def run_stats(query_log) -> RunStats:
    """Cache statistics from a per-query (flag, wall seconds) log.

    Mean and P95 (nearest-rank) cover only the full-trace miss costs; the
    speedup compares a hypothetical all-miss run against the actual total
    channel time.
    """
    log = list(query_log)
    hits = sum(1 for flag, _ in log if flag == "hit")
    misses = sum(1 for flag, _ in log if flag == "miss")
    total = hits + misses
    hit_ratio = hits / total if total else 0.0
    miss_costs = sorted(cost for flag, cost in log if flag == "miss")
    if miss_costs:
        mean_cost = sum(miss_costs) / len(miss_costs)
        rank = max(1, math.ceil(0.95 * len(miss_costs)))  # nearest-rank
        p95 = miss_costs[rank - 1]
    else:
        mean_cost = 0.0
        p95 = 0.0
    actual = sum(cost for _, cost in log)
    speedup = (total * mean_cost / actual) if actual > 0 else 1.0
    return RunStats(hit_ratio, mean_cost * 1e3, p95 * 1e3, speedup)


# ---------------------------------------------------------------------------
# Emitters
# ---------------------------------------------------------------------------

RECORD_COLUMNS = ["packet_id", "src", "rx", "t", "kind", "rat_id", "rssi_dbm",
                  "sinr_db", "decoded", "channel_model_tag", "los_flag",
                  "interferer_count", "interferer_ids", "reason"]


def write_records_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.packet_id, r.src, r.rx, repr(r.t), r.kind, r.rat_id,
                        repr(r.rssi_dbm), repr(r.sinr_db), int(r.decoded),
                        r.channel_model_tag, r.los_flag, r.interferer_count,
                        ";".join(str(i) for i in r.interferer_ids), r.reason])


def write_sinr_hist_csv(path, hist: Histogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left_db", "bin_right_db", "count", "is_mode"])
        for i, c in enumerate(hist.counts):
            w.writerow([hist.bin_edges[i], hist.bin_edges[i + 1], int(c),
                        int(i in hist.mode_bins)])


def write_run_stats_csv(path, rows) -> None:
    """rows: iterable of (label, RunStats)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "cache_hit_ratio", "trace_mean_cost_ms",
                    "trace_p95_ms", "speedup_vs_no_cache"])
        for label, st in rows:
            w.writerow([label, f"{st.cache_hit_ratio:.6f}", f"{st.trace_mean_cost_ms:.3f}",
                        f"{st.trace_p95_ms:.3f}", f"{st.speedup_vs_no_cache:.2f}"])


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
