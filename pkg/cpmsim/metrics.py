"""Evaluation metrics: CBR, PDR, OPR, time between updates and CPM statistics"""

import logging
import math
from collections import Counter, defaultdict
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .geometry import OpenArea, minimum_image, union_length
from .models import Cpm, ReceptionOutcome

logger = logging.getLogger(__name__)

EPSILON = 1e-9
LINK_CLASSES = ("all", "los", "nlos")
HIGHWAY_RELATIONS = ("all",)
GRID_RELATIONS = ("all", "same_street", "perpendicular", "other")


class DistanceBins:
    """Distance bins of width ΔD; the bin centred on d covers [d - ΔD/2, d + ΔD/2)"""

    def __init__(self, width_m: float = 25.0, max_distance_m: float = 500.0):
        self.width_m = width_m
        self.max_distance_m = max_distance_m
        self.count = int(math.floor(max_distance_m / width_m + 0.5)) + 1

    @property
    def centers(self) -> np.ndarray:
        return np.arange(self.count) * self.width_m

    def index(self, distance: np.ndarray) -> np.ndarray:
        """Bin index per distance, -1 when outside the binned range"""
        distance = np.asarray(distance, dtype=float)
        with np.errstate(invalid="ignore"):
            index = np.floor(distance / self.width_m + 0.5)
        valid = np.isfinite(index) & (distance >= 0) & (index < self.count)
        return np.where(valid, index, -1).astype(int)

    def center(self, index: int) -> float:
        return float(index * self.width_m)


def cbr(busy_intervals: Iterable[Tuple[float, float]], window_start: float, window_s: float = 0.1) -> float:
    """Share of [window_start, window_start + window) covered by busy intervals"""
    window_end = window_start + window_s
    clipped = [
        (max(start, window_start), min(end, window_end))
        for start, end in busy_intervals
        if end > window_start and start < window_end
    ]
    return min(max(union_length(clipped) / window_s, 0.0), 1.0)


def _pdr_curves(numerators: np.ndarray, denominators: np.ndarray, bins: DistanceBins) -> Dict[str, Dict[float, Tuple[float, int]]]:
    """Per-class {bin centre: (PDR averaged over transmitters, transmitter count)}"""
    curves: Dict[str, Dict[float, Tuple[float, int]]] = {}
    for c, name in enumerate(LINK_CLASSES):
        curve = {}
        for b in range(bins.count):
            y = denominators[c, :, b]
            present = y > 0
            if not present.any():
                continue
            ratios = numerators[c, present, b] / y[present]
            curve[bins.center(b)] = (float(np.mean(ratios)), int(present.sum()))
        curves[name] = curve
    return curves


def pdr(
    reception_log: Iterable[ReceptionOutcome],
    bins: DistanceBins,
    n_vehicles: Optional[int] = None,
) -> Dict[str, Dict[float, Tuple[float, int]]]:
    """
    Packet delivery ratio per distance bin and link class

    Each transmitter's ratio X/Y is taken per bin, then averaged over the
    transmitters that had any receiver in that bin. Bins nobody reached are
    absent.
    """
    records = list(reception_log)
    if n_vehicles is None:
        n_vehicles = 1 + max((max(r.sender_id, r.receiver_id) for r in records), default=-1)
    numerators = np.zeros((len(LINK_CLASSES), max(n_vehicles, 1), bins.count))
    denominators = np.zeros_like(numerators)
    for record in records:
        b = int(bins.index(record.distance_m))
        if b < 0:
            continue
        decoded = 1.0 if record.decoded else 0.0
        for c in (0, 1 if record.los else 2):
            denominators[c, record.sender_id, b] += 1.0
            numerators[c, record.sender_id, b] += decoded
    return _pdr_curves(numerators, denominators, bins)


def pdr_distance_at(curve: Mapping[float, float], level: float = 0.9) -> float:
    """Largest bin centre up to which every bin meets `level`; 0 when the first does not"""
    reached = 0.0
    for center in sorted(curve):
        value = curve[center]
        if isinstance(value, tuple):
            value = value[0]
        if value + EPSILON < level:
            break
        reached = center
    return reached


def opr_window(speed: float, t_gen_cpm: float) -> float:
    """Trailing window within which a receiver must hear about an object"""
    if speed <= 0:
        return 1.0
    periods = math.ceil((4.0 / speed) / t_gen_cpm - EPSILON)
    return min(t_gen_cpm * periods, 1.0)


def opr_windows(speeds: np.ndarray, t_gen_cpm: float) -> np.ndarray:
    speeds = np.asarray(speeds, dtype=float)
    with np.errstate(divide="ignore"):
        periods = np.ceil((4.0 / speeds) / t_gen_cpm - EPSILON)
    windows = np.minimum(t_gen_cpm * periods, 1.0)
    return np.where(speeds > 0, windows, 1.0)


def _perceived(age: np.ndarray, window: np.ndarray) -> np.ndarray:
    # an object never heard about has infinite age and is missed even by an unbounded window
    return np.isfinite(age) & (age <= window + EPSILON)


class Delivery(NamedTuple):
    """A decoded CPM at one receiver"""
    time: float
    receiver: int
    object_ids: Tuple[int, ...]


class TrajectorySample(NamedTuple):
    """Ground truth at one mobility tick"""
    time: float
    positions: np.ndarray
    speeds: np.ndarray
    active: np.ndarray
    in_region: np.ndarray
    street_keys: Optional[np.ndarray]


def _relation_masks(relations: Sequence[str], receivers: np.ndarray, keys: Optional[np.ndarray], n: int) -> List[np.ndarray]:
    masks = []
    for relation in relations:
        if relation == "all" or keys is None:
            masks.append(np.ones((len(receivers), n), dtype=bool))
            continue
        axis_i = keys[receivers, 0][:, np.newaxis]
        street_i = keys[receivers, 1][:, np.newaxis]
        axis_j = keys[:, 0][np.newaxis, :]
        street_j = keys[:, 1][np.newaxis, :]
        same_axis = axis_i == axis_j
        if relation == "same_street":
            masks.append(same_axis & (street_i == street_j))
        elif relation == "perpendicular":
            masks.append(~same_axis)
        else:
            masks.append(same_axis & (street_i != street_j))
    return masks


class PairAccumulator:
    """Sparse per-key sums, compacted in batches"""

    COMPACT_EVERY = 50

    def __init__(self, width: int = 2):
        self.width = width
        self._keys = np.zeros(0, dtype=np.int64)
        self._sums = np.zeros((0, width))
        self._pending_keys: List[np.ndarray] = []
        self._pending_values: List[np.ndarray] = []

    def add(self, keys: np.ndarray, values: np.ndarray) -> None:
        if len(keys) == 0:
            return
        self._pending_keys.append(np.asarray(keys, dtype=np.int64))
        self._pending_values.append(np.asarray(values, dtype=float).reshape(-1, self.width))
        if len(self._pending_keys) >= self.COMPACT_EVERY:
            self._compact()

    def _compact(self) -> None:
        if not self._pending_keys:
            return
        keys = np.concatenate([self._keys] + self._pending_keys)
        values = np.concatenate([self._sums] + self._pending_values)
        unique, inverse = np.unique(keys, return_inverse=True)
        sums = np.zeros((len(unique), self.width))
        np.add.at(sums, inverse.reshape(-1), values)
        self._keys, self._sums = unique, sums
        self._pending_keys, self._pending_values = [], []

    def items(self) -> Tuple[np.ndarray, np.ndarray]:
        self._compact()
        return self._keys, self._sums


def _opr_curves(
    keys: np.ndarray,
    sums: np.ndarray,
    relations: Sequence[str],
    n: int,
    bins: DistanceBins,
) -> Dict[str, Dict[float, Tuple[float, int]]]:
    """Per relation {bin centre: (OPR averaged over pairs, pair count)}"""
    curves: Dict[str, Dict[float, Tuple[float, int]]] = {name: {} for name in relations}
    if len(keys) == 0:
        return curves
    present = sums[:, 1] > 0
    keys, sums = keys[present], sums[present]
    ratio = sums[:, 0] / sums[:, 1]
    b = keys % bins.count
    r = keys // (bins.count * n * n)
    group = r * bins.count + b
    size = len(relations) * bins.count
    totals = np.bincount(group, weights=ratio, minlength=size)
    counts = np.bincount(group, minlength=size)
    for index in np.flatnonzero(counts):
        relation = relations[index // bins.count]
        curves[relation][bins.center(int(index % bins.count))] = (
            float(totals[index] / counts[index]),
            int(counts[index]),
        )
    return curves


def opr(
    deliveries: Sequence[Delivery],
    trajectory: Sequence[TrajectorySample],
    bins: DistanceBins,
    t_gen_cpm: float,
    layout: Optional[OpenArea] = None,
    warmup_s: float = 0.0,
    relations: Sequence[str] = HIGHWAY_RELATIONS,
    window_s: Optional[float] = None,
    tick_s: float = 0.1,
) -> Dict[str, Dict[float, Tuple[float, int]]]:
    """
    Object perception ratio by exhaustive enumeration of ticks and pairs

    At each tick, object j counts as perceived by receiver i when i decoded a
    CPM about j strictly before the tick and within the trailing window
    (opr_window of j's speed, or `window_s` when given).
    """
    layout = layout or OpenArea((-math.inf, -math.inf, math.inf, math.inf))
    by_pair: Dict[Tuple[int, int], List[float]] = defaultdict(list)
    for delivery in sorted(deliveries, key=lambda d: d.time):
        for j in delivery.object_ids:
            if j != delivery.receiver:
                by_pair[(delivery.receiver, j)].append(delivery.time)

    totals: Dict[int, List[float]] = {}
    for sample in trajectory:
        if sample.time < warmup_s - EPSILON:
            continue
        step = tick_s
        n = len(sample.speeds)
        windows = opr_windows(sample.speeds, t_gen_cpm) if window_s is None else np.full(n, window_s)
        for i in range(n):
            if not (sample.active[i] and sample.in_region[i]):
                continue
            for j in range(n):
                if j == i or not sample.active[j]:
                    continue
                offset = minimum_image(sample.positions[j] - sample.positions[i], layout)
                b = int(bins.index(math.hypot(offset[0], offset[1])))
                if b < 0:
                    continue
                heard = [t for t in by_pair.get((i, j), []) if t < sample.time]
                age = sample.time - heard[-1] if heard else math.inf
                perceived = bool(_perceived(np.array(age), np.array(windows[j])))
                for r, relation in enumerate(relations):
                    if not _relation_holds(relation, sample.street_keys, i, j):
                        continue
                    key = ((r * n + i) * n + j) * bins.count + b
                    entry = totals.setdefault(key, [0.0, 0.0])
                    entry[0] += step if perceived else 0.0
                    entry[1] += step
    if not totals:
        return {name: {} for name in relations}
    n = len(trajectory[0].speeds)
    keys = np.array(sorted(totals), dtype=np.int64)
    sums = np.array([totals[k] for k in keys])
    return _opr_curves(keys, sums, relations, n, bins)


def _relation_holds(relation: str, keys: Optional[np.ndarray], i: int, j: int) -> bool:
    if relation == "all" or keys is None:
        return True
    same_axis = keys[i, 0] == keys[j, 0]
    if relation == "same_street":
        return bool(same_axis and keys[i, 1] == keys[j, 1])
    if relation == "perpendicular":
        return bool(not same_axis)
    return bool(same_axis and keys[i, 1] != keys[j, 1])


def time_between_updates(
    deliveries: Sequence[Delivery],
    trajectory: Sequence[TrajectorySample],
    bins: DistanceBins,
    layout: Optional[OpenArea] = None,
    warmup_s: float = 0.0,
) -> Dict[float, Tuple[float, int]]:
    """
    Mean interval between successive CPMs a receiver decodes about the same object

    Each interval lands in the bin of the receiver-object distance at the
    last mobility tick before it ends; pairs with one update add nothing.
    """
    layout = layout or OpenArea((-math.inf, -math.inf, math.inf, math.inf))
    tick_times = np.array([sample.time for sample in trajectory])
    last_heard: Dict[Tuple[int, int], float] = {}
    sums = np.zeros(bins.count)
    counts = np.zeros(bins.count, dtype=int)
    for delivery in sorted(deliveries, key=lambda d: d.time):
        tick = int(np.searchsorted(tick_times, delivery.time, side="right")) - 1
        sample = trajectory[max(tick, 0)]
        i = delivery.receiver
        for j in delivery.object_ids:
            if j == i:
                continue
            previous = last_heard.get((i, j))
            last_heard[(i, j)] = delivery.time
            if previous is None or delivery.time < warmup_s - EPSILON or not sample.in_region[i]:
                continue
            offset = minimum_image(sample.positions[j] - sample.positions[i], layout)
            b = int(bins.index(math.hypot(offset[0], offset[1])))
            if b < 0:
                continue
            sums[b] += delivery.time - previous
            counts[b] += 1
    return {bins.center(b): (float(sums[b] / counts[b]), int(counts[b])) for b in np.flatnonzero(counts)}


class CpmLogEntry(NamedTuple):
    """Compact record of one generated CPM"""
    time: float
    sender: int
    object_ids: Tuple[int, ...]
    size_bytes: int
    header_bytes: int
    sic: bool
    policy: str
    in_region: bool

    @property
    def object_count(self) -> int:
        return len(self.object_ids)

    @classmethod
    def from_cpm(cls, cpm: Cpm, in_region: bool) -> "CpmLogEntry":
        return cls(
            cpm.generation_time,
            cpm.sender_id,
            tuple(cpm.object_ids),
            cpm.size_bytes,
            cpm.header_bytes,
            cpm.has_sic,
            cpm.policy.value,
            in_region,
        )


class CpmStats(BaseModel):
    """CPM content and rate statistics"""
    cpm_count: int = 0
    rate_hz: float = Field(0.0, description="CPMs per vehicle per second")
    objects_per_cpm: float = 0.0
    overhead_fraction: float = Field(0.0, description="Header bytes over total CPM bytes")
    object_reports_per_s: float = Field(0.0, description="Inclusions per detected object per second")
    objects_histogram: Dict[int, int] = {}
    detected_histogram: Dict[int, int] = {}
    interval_histogram: Dict[float, int] = {}


def cpm_stats(
    cpm_log: Sequence[CpmLogEntry],
    checks: int,
    t_gen_cpm: float,
    detected_counts: Optional[Mapping[int, int]] = None,
) -> CpmStats:
    """
    Rate and content distributions of the CPMs in `cpm_log`

    Args:
        cpm_log: CPMs generated inside the statistics region after warm-up
        checks: generation checks performed under the same restriction
        t_gen_cpm: generation check period
        detected_counts: histogram {detected objects: checks}
    """
    count = len(cpm_log)
    objects = Counter(entry.object_count for entry in cpm_log)
    total_bytes = sum(entry.size_bytes for entry in cpm_log)
    header_bytes = sum(entry.header_bytes for entry in cpm_log)
    inclusions = sum(entry.object_count for entry in cpm_log)

    intervals: Counter = Counter()
    last_by_sender: Dict[int, float] = {}
    for entry in sorted(cpm_log, key=lambda e: (e.sender, e.time)):
        previous = last_by_sender.get(entry.sender)
        if previous is not None:
            intervals[round(entry.time - previous, 6)] += 1
        last_by_sender[entry.sender] = entry.time

    detected = dict(detected_counts or {})
    detected_total = sum(k * v for k, v in detected.items())
    exposure = checks * t_gen_cpm
    return CpmStats(
        cpm_count=count,
        rate_hz=count / exposure if exposure > 0 else 0.0,
        objects_per_cpm=inclusions / count if count else 0.0,
        overhead_fraction=header_bytes / total_bytes if total_bytes else 0.0,
        object_reports_per_s=inclusions / (detected_total * t_gen_cpm) if detected_total else 0.0,
        objects_histogram=dict(sorted(objects.items())),
        detected_histogram=dict(sorted(detected.items())),
        interval_histogram=dict(sorted(intervals.items())),
    )


class MetricsStore:
    """
    Streaming accumulators fed by the scheduler

    Every sample is restricted to vehicles inside the statistics region and
    to times after the warm-up; PDR counts frames whose sender was inside
    the region at transmission time.
    """

    def __init__(
        self,
        n_vehicles: int,
        bins: DistanceBins,
        t_gen_cpm: float,
        warmup_s: float = 5.0,
        cbr_window_s: float = 0.1,
        layout: Optional[OpenArea] = None,
        relations: Sequence[str] = HIGHWAY_RELATIONS,
        record_busy_intervals: bool = False,
        tick_s: float = 0.1,
    ):
        n = n_vehicles
        self.n = n
        self.bins = bins
        self.t_gen_cpm = t_gen_cpm
        self.warmup_s = warmup_s
        self.cbr_window_s = cbr_window_s
        self.layout = layout or OpenArea((-math.inf, -math.inf, math.inf, math.inf))
        self.relations = tuple(relations)

        # CBR
        self._busy_since = np.full(n, np.nan)
        self._window_busy = np.zeros(n)
        self._window_start = 0.0
        self.cbr_samples: List[Tuple[float, int, float]] = []
        self.record_busy_intervals = record_busy_intervals
        self.busy_intervals: Dict[int, List[Tuple[float, float]]] = defaultdict(list)

        # PDR
        self.pdr_numerators = np.zeros((len(LINK_CLASSES), max(n, 1), bins.count))
        self.pdr_denominators = np.zeros_like(self.pdr_numerators)

        # OPR and update intervals
        self.last_heard = np.full((n, n), -np.inf)
        self.opr_totals = PairAccumulator()
        self.update_sums = np.zeros(bins.count)
        self.update_counts = np.zeros(bins.count, dtype=int)
        self._tick_positions = np.zeros((n, 2))
        self._tick_region = np.zeros(n, dtype=bool)
        self.tick_s = tick_s

        # CPM statistics
        self.cpm_entries: List[CpmLogEntry] = []
        self.checks = 0
        self.detected_counts: Counter = Counter()

    def _after_warmup(self, t: float) -> bool:
        return t >= self.warmup_s - EPSILON

    # Channel busy ratio

    def on_busy_change(self, vehicle_id: int, busy: bool, now: float) -> None:
        if busy:
            self._busy_since[vehicle_id] = now
            return
        since = self._busy_since[vehicle_id]
        if np.isnan(since):
            return
        self._window_busy[vehicle_id] += now - max(since, self._window_start)
        self._busy_since[vehicle_id] = np.nan
        if self.record_busy_intervals:
            self.busy_intervals[vehicle_id].append((float(since), now))

    def close_cbr_window(self, window_end: float, in_region: np.ndarray) -> None:
        """Finish the window ending at `window_end` and start the next one"""
        busy_now = ~np.isnan(self._busy_since)
        if busy_now.any():
            open_since = np.maximum(self._busy_since[busy_now], self._window_start)
            self._window_busy[busy_now] += window_end - open_since
        window_start = self._window_start
        if self._after_warmup(window_start):
            ratios = np.clip(self._window_busy / self.cbr_window_s, 0.0, 1.0)
            for vehicle_id in np.flatnonzero(in_region):
                self.cbr_samples.append((window_start, int(vehicle_id), float(ratios[vehicle_id])))
        self._window_busy = np.zeros(self.n)
        self._window_start = window_end

    @property
    def window_start(self) -> float:
        return self._window_start

    def finish(self, end_time: float) -> None:
        """Close busy intervals still open when the run stops"""
        if self.record_busy_intervals:
            for vehicle_id in np.flatnonzero(~np.isnan(self._busy_since)):
                self.busy_intervals[int(vehicle_id)].append((float(self._busy_since[vehicle_id]), end_time))

    # Packet delivery ratio

    def record_frame(self, sender: int, tx_time: float, sender_in_region: bool,
                     distance: np.ndarray, los: np.ndarray, decoded: np.ndarray) -> None:
        if not (sender_in_region and self._after_warmup(tx_time)):
            return
        index = self.bins.index(distance)
        valid = index >= 0
        for c, mask in ((0, valid), (1, valid & los), (2, valid & ~los)):
            np.add.at(self.pdr_denominators[c, sender], index[mask], 1.0)
            np.add.at(self.pdr_numerators[c, sender], index[mask & decoded], 1.0)

    # Object perception and update intervals

    def record_tick(self, now: float, positions: np.ndarray, speeds: np.ndarray, active: np.ndarray,
                    in_region: np.ndarray, street_keys: Optional[np.ndarray] = None) -> None:
        """Ground truth at one mobility tick"""
        self._tick_positions = positions.copy()
        self._tick_region = in_region & active
        if not self._after_warmup(now) or self.n == 0:
            return
        step = self.tick_s
        receivers = np.flatnonzero(self._tick_region)
        if len(receivers) == 0:
            return

        n = self.n
        offsets = minimum_image(positions[np.newaxis, :, :] - positions[receivers][:, np.newaxis, :], self.layout)
        b = self.bins.index(np.hypot(offsets[..., 0], offsets[..., 1]))
        valid = (b >= 0) & active[np.newaxis, :]
        valid[np.arange(len(receivers)), receivers] = False
        windows = opr_windows(speeds, self.t_gen_cpm)
        perceived = _perceived(now - self.last_heard[receivers], windows[np.newaxis, :])

        rows = np.broadcast_to(receivers[:, np.newaxis], valid.shape)
        cols = np.broadcast_to(np.arange(n)[np.newaxis, :], valid.shape)
        for r, mask in enumerate(_relation_masks(self.relations, receivers, street_keys, n)):
            selected = valid & mask
            if not selected.any():
                continue
            keys = ((r * n + rows[selected]) * n + cols[selected]) * self.bins.count + b[selected]
            values = np.column_stack([np.where(perceived[selected], step, 0.0), np.full(len(keys), step)])
            self.opr_totals.add(keys, values)

    def record_delivery(self, now: float, receivers: np.ndarray, object_ids: Sequence[int]) -> None:
        """A CPM about `object_ids` decoded by `receivers`"""
        if len(receivers) == 0 or len(object_ids) == 0:
            return
        objects = np.asarray(object_ids, dtype=int)
        receivers = np.asarray(receivers, dtype=int)
        grid_r = np.repeat(receivers, len(objects))
        grid_o = np.tile(objects, len(receivers))
        keep = grid_r != grid_o
        grid_r, grid_o = grid_r[keep], grid_o[keep]
        previous = self.last_heard[grid_r, grid_o]
        if self._after_warmup(now):
            counted = np.isfinite(previous) & self._tick_region[grid_r]
            if counted.any():
                offsets = minimum_image(
                    self._tick_positions[grid_o[counted]] - self._tick_positions[grid_r[counted]], self.layout
                )
                b = self.bins.index(np.hypot(offsets[:, 0], offsets[:, 1]))
                inside = b >= 0
                np.add.at(self.update_sums, b[inside], (now - previous[counted])[inside])
                np.add.at(self.update_counts, b[inside], 1)
        self.last_heard[grid_r, grid_o] = now

    # CPM statistics

    def record_check(self, now: float, detected: int, in_region: bool) -> None:
        if in_region and self._after_warmup(now):
            self.checks += 1
            self.detected_counts[detected] += 1

    def record_cpm(self, entry: CpmLogEntry) -> None:
        if entry.in_region and self._after_warmup(entry.time):
            self.cpm_entries.append(entry)

    # Results

    def pdr_curves(self) -> Dict[str, Dict[float, Tuple[float, int]]]:
        return _pdr_curves(self.pdr_numerators, self.pdr_denominators, self.bins)

    def opr_curves(self) -> Dict[str, Dict[float, Tuple[float, int]]]:
        keys, sums = self.opr_totals.items()
        return _opr_curves(keys, sums, self.relations, self.n, self.bins)

    def update_intervals(self) -> Dict[float, Tuple[float, int]]:
        return {
            self.bins.center(b): (float(self.update_sums[b] / self.update_counts[b]), int(self.update_counts[b]))
            for b in np.flatnonzero(self.update_counts)
        }

    def cbr_series(self) -> Dict[float, float]:
        """Mean CBR over statistics-region vehicles per window start"""
        grouped: Dict[float, List[float]] = defaultdict(list)
        for window_start, _, value in self.cbr_samples:
            grouped[window_start].append(value)
        return {start: float(np.mean(values)) for start, values in sorted(grouped.items())}

    def mean_cbr(self) -> float:
        if not self.cbr_samples:
            return 0.0
        return float(np.mean([value for _, _, value in self.cbr_samples]))

    def cpm_statistics(self) -> CpmStats:
        return cpm_stats(self.cpm_entries, self.checks, self.t_gen_cpm, self.detected_counts)

    def check_invariants(self) -> List[str]:
        """Human-readable violations of the accumulator invariants"""
        problems = []
        if np.any(self.pdr_numerators > self.pdr_denominators):
            problems.append("PDR numerator exceeds denominator")
        _, sums = self.opr_totals.items()
        if len(sums) and np.any(sums[:, 0] > sums[:, 1] + EPSILON):
            problems.append("perceived time exceeds total time")
        if any(not 0.0 <= value <= 1.0 for _, _, value in self.cbr_samples):
            problems.append("CBR sample outside [0, 1]")
        return problems
