"""Discrete-event core: one deterministic run, and sweeps over many"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .channel import DECODED, Channel, MacEntity, ReceptionBatch
from .clock import EventClass, InvariantViolation, SimClock, random_stream
from .config import ConfigValidationError, ScenarioConfig
from .cpm_engine import CpmGenerator
from .geometry import ManhattanGrid, StatisticsRegion
from .metrics import (
    GRID_RELATIONS,
    HIGHWAY_RELATIONS,
    CpmLogEntry,
    Delivery,
    DistanceBins,
    MetricsStore,
    TrajectorySample,
    pdr_distance_at,
)
from .mobility import MobilityModel, build_mobility
from .models import GenerationPolicy, PolicyVariant, ReceptionOutcome, VehicleState
from .sensing import Sensor

logger = logging.getLogger(__name__)

EPSILON = 1e-9
COMPARED_METRICS = ("cpm_rate_hz", "objects_per_cpm", "cbr", "pdr_distance_m")


class FrameLogEntry(NamedTuple):
    frame_id: int
    sender: int
    start_s: float
    airtime_s: float
    size_bytes: int


class RunSummary(BaseModel):
    """Headline numbers of one run"""
    scenario: str
    policy: PolicyVariant
    seed: int
    config_hash: str
    cpm_rate_hz: float
    objects_per_cpm: float
    cbr: float
    pdr_distance_m: float
    overhead_fraction: float
    object_reports_per_s: float
    cpm_count: int
    frames: int
    duration_s: float
    wall_time_s: float = 0.0


@dataclass
class SimulationResult:
    """Metrics and optional logs of a finished run"""
    config: ScenarioConfig
    policy: GenerationPolicy
    metrics: MetricsStore
    generators: List[CpmGenerator]
    frames: int
    cpm_log: List[CpmLogEntry] = field(default_factory=list)
    frame_log: List[FrameLogEntry] = field(default_factory=list)
    reception_log: List[ReceptionOutcome] = field(default_factory=list)
    trajectory: List[TrajectorySample] = field(default_factory=list)
    deliveries: List[Delivery] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def seed(self) -> int:
        return self.config.scenario.seed

    def summary(self) -> RunSummary:
        stats = self.metrics.cpm_statistics()
        curves = self.metrics.pdr_curves()
        return RunSummary(
            scenario=self.config.name,
            policy=self.policy.variant,
            seed=self.seed,
            config_hash=self.config.config_hash(),
            cpm_rate_hz=stats.rate_hz,
            objects_per_cpm=stats.objects_per_cpm,
            cbr=self.metrics.mean_cbr(),
            pdr_distance_m=pdr_distance_at(curves["los"], self.config.metrics.pdr_level) if curves["los"] else 0.0,
            overhead_fraction=stats.overhead_fraction,
            object_reports_per_s=stats.object_reports_per_s,
            cpm_count=stats.cpm_count,
            frames=self.frames,
            duration_s=self.config.scenario.duration_s,
            wall_time_s=self.wall_time_s,
        )


class Simulation:
    """
    One run of one scenario under one generation policy

    Mobility ticks, per-vehicle generation checks, MAC access and frame ends
    all run as simpy processes on a SimClock, so the event order (and hence
    every output) depends only on the configuration and its seed.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        policy: Optional[GenerationPolicy] = None,
        keep_history: bool = False,
        mobility: Optional[MobilityModel] = None,
    ):
        self.config = config
        self.policy = policy or config.policy()
        seed = config.scenario.seed
        self.duration = config.scenario.duration_s
        self.env = SimClock()

        self.mobility = mobility or build_mobility(
            config, random_stream(seed, "mobility"), random_stream(seed, "routing")
        )
        self.layout = self.mobility.layout
        self.region = StatisticsRegion.for_scenario(config, self.layout)
        self.sensor = Sensor(config.sensing, self.layout, random_stream(seed, "sensing"), config.traffic)
        n = self.mobility.n_vehicles
        self.n = n

        size_model = config.size_model()
        self.generators = [
            CpmGenerator(i, self.policy, size_model, keep_history, layout=self.layout) for i in range(n)
        ]
        self.metrics = MetricsStore(
            n,
            DistanceBins(config.metrics.bin_width_m, config.metrics.max_distance_m),
            self.policy.t_gen_cpm_s,
            warmup_s=config.metrics.warmup_s,
            cbr_window_s=config.metrics.cbr_window_s,
            layout=self.layout,
            relations=GRID_RELATIONS if isinstance(self.layout, ManhattanGrid) else HIGHWAY_RELATIONS,
            record_busy_intervals=config.output.busy_intervals,
            tick_s=self.mobility.timestep,
        )
        self.channel = Channel(
            self.env,
            config.radio,
            config.mac,
            self.mobility,
            self.layout,
            random_stream(seed, "shadowing"),
            in_region=self.region.contains_point,
            on_busy_change=self.metrics.on_busy_change,
        )
        backoff = random_stream(seed, "backoff")
        self.macs = [
            MacEntity(self.env, i, self.channel, config.mac, backoff, on_frame_end=self._frame_end)
            for i in range(n)
        ]
        self.phases = random_stream(seed, "phase").uniform(0.0, self.policy.t_gen_cpm_s, n)

        output = config.output
        self.cpm_log: List[CpmLogEntry] = []
        self.frame_log: List[FrameLogEntry] = []
        self.reception_log: List[ReceptionOutcome] = []
        self.trajectory: List[TrajectorySample] = []
        self.deliveries: List[Delivery] = []
        self._log_cpms = output.cpm_log
        self._log_frames = output.frame_log
        self._log_receptions = output.reception_log
        self._log_trajectories = output.trajectories
        self._in_region = np.zeros(n, dtype=bool)

    def _mobility_loop(self):
        dt = self.mobility.timestep
        k = 0
        while k * dt < self.duration - EPSILON:
            t = k * dt
            yield self.env.at(t, EventClass.MOBILITY)
            self.mobility.advance(t)
            positions = self.mobility.positions
            active = self.mobility.active_at(t)
            self._in_region = self.region.contains(positions) & active
            keys = self.mobility.street_keys()
            self.metrics.record_tick(t, positions, self.mobility.speeds, active, self._in_region, keys)
            if self._log_trajectories:
                self.trajectory.append(
                    TrajectorySample(t, positions.copy(), self.mobility.speeds.copy(), active, self._in_region, keys)
                )
            k += 1

    def _generation_loop(self, vehicle_id: int, phase: float):
        period = self.policy.t_gen_cpm_s
        k = 0
        while phase + k * period < self.duration - EPSILON:
            t = phase + k * period
            yield self.env.at(t, EventClass.GENERATION_CHECK, vehicle_id)
            self._generation_check(vehicle_id, t)
            k += 1

    def _cbr_loop(self):
        window = self.config.metrics.cbr_window_s
        k = 1
        while k * window < self.duration - EPSILON:
            t = k * window
            yield self.env.at(t, EventClass.METRICS)
            self.metrics.close_cbr_window(t, self._in_region)
            k += 1

    def _generation_check(self, vehicle_id: int, now: float) -> None:
        mobility = self.mobility
        active = mobility.active_at(now)
        if not active[vehicle_id]:
            return
        positions = mobility.positions_at(now)
        visible = self.sensor.visible(vehicle_id, positions, active, mobility.headings)
        detections = self.sensor.measure(visible, now, positions, mobility.speeds, mobility.accelerations)
        position = (float(positions[vehicle_id, 0]), float(positions[vehicle_id, 1]))
        sender = VehicleState.model_construct(
            id=vehicle_id,
            position=position,
            speed=float(mobility.speeds[vehicle_id]),
            acceleration=float(mobility.accelerations[vehicle_id]),
            heading=float(mobility.headings[vehicle_id]),
            lane=int(mobility.lanes[vehicle_id]),
        )
        in_region = self.region.contains_point(position)
        self.metrics.record_check(now, len(detections), in_region)

        cpm = self.generators[vehicle_id].check(now, detections, sender)
        if cpm is None:
            return
        entry = CpmLogEntry.from_cpm(cpm, in_region)
        self.metrics.record_cpm(entry)
        if self._log_cpms:
            self.cpm_log.append(entry)
        self.macs[vehicle_id].enqueue(cpm)

    def _frame_end(self, batch: ReceptionBatch) -> None:
        frame = batch.frame
        now = batch.time
        self.metrics.record_frame(
            frame.sender_id,
            frame.start_time,
            frame.sender_in_region,
            batch.distance,
            batch.los,
            batch.outcomes == DECODED,
        )
        decoded = batch.decoded_receivers
        object_ids = frame.payload.object_ids
        self.metrics.record_delivery(now, decoded, object_ids)
        if self._log_frames:
            self.frame_log.append(
                FrameLogEntry(frame.frame_id, frame.sender_id, frame.start_time, frame.airtime, frame.size_bytes)
            )
        if self._log_receptions:
            self.reception_log.extend(batch.to_outcomes())
        if self._log_trajectories and object_ids:
            ids = tuple(object_ids)
            self.deliveries.extend(Delivery(now, int(r), ids) for r in decoded)

    def _check_invariants(self) -> None:
        problems = self.metrics.check_invariants()
        for generator in self.generators:
            for record in generator.records.values():
                if record.ever_included and record.included_at > self.env.now + EPSILON:
                    problems.append(f"vehicle {generator.vehicle_id} object {record.object_id} included in the future")
        if problems:
            raise InvariantViolation(
                "Metric accumulators inconsistent after run",
                {"now": self.env.now, "problems": "; ".join(problems[:5]), "vehicles": self.n},
            )

    def run(self) -> SimulationResult:
        started = time.perf_counter()
        logger.info(
            f"Run {self.config.name} policy={self.policy.variant.value} seed={self.config.scenario.seed} "
            f"vehicles={self.n} duration={self.duration:g}s"
        )
        self.env.process(self._mobility_loop())
        self.env.process(self._cbr_loop())
        for vehicle_id in range(self.n):
            self.env.process(self._generation_loop(vehicle_id, float(self.phases[vehicle_id])))

        self.env.run(until=self.duration)

        window = self.config.metrics.cbr_window_s
        if self.duration - self.metrics.window_start >= window - EPSILON:
            self.metrics.close_cbr_window(self.metrics.window_start + window, self._in_region)
        self.metrics.finish(self.duration)
        self._check_invariants()

        result = SimulationResult(
            config=self.config,
            policy=self.policy,
            metrics=self.metrics,
            generators=self.generators,
            frames=sum(mac.sent for mac in self.macs),
            cpm_log=self.cpm_log,
            frame_log=self.frame_log,
            reception_log=self.reception_log,
            trajectory=self.trajectory,
            deliveries=self.deliveries,
            wall_time_s=time.perf_counter() - started,
        )
        logger.info(
            f"Run {self.config.name} policy={self.policy.variant.value} finished: "
            f"{sum(g.cpm_count for g in self.generators)} CPMs, {result.frames} frames "
            f"in {result.wall_time_s:.1f}s"
        )
        return result


def run(
    config: ScenarioConfig,
    policy: Optional[Union[GenerationPolicy, PolicyVariant, str]] = None,
    keep_history: bool = False,
) -> SimulationResult:
    """Simulate `config` under `policy` (a GenerationPolicy or a variant name)"""
    if policy is None or isinstance(policy, (PolicyVariant, str)):
        policy = config.policy(policy or PolicyVariant.ETSI)
    return Simulation(config, policy, keep_history=keep_history).run()


class SweepCell(NamedTuple):
    config: ScenarioConfig
    variant: PolicyVariant
    seed: int


@dataclass
class SweepResult:
    """Per-cell summaries, the policy comparison and the cells that failed"""
    table: pd.DataFrame
    comparison: pd.DataFrame
    failures: List[Tuple[str, str, int, str]] = field(default_factory=list)


def _run_cell(cell: SweepCell) -> RunSummary:
    config = cell.config.with_overrides({"scenario.seed": cell.seed, "output.cpm_log": False, "output.frame_log": False})
    return run(config, cell.variant).summary()


def compare_policies(table: pd.DataFrame) -> pd.DataFrame:
    """
    ETSI against look-ahead per scenario, averaged over seeds

    difference_pct = (look_ahead - etsi) / etsi * 100, NaN when the ETSI
    mean is zero or either policy is missing.
    """
    columns = ["scenario", "metric", "etsi", "look_ahead", "difference_pct"]
    if table.empty:
        return pd.DataFrame(columns=columns)
    means = table.groupby(["scenario", "policy"], sort=True)[list(COMPARED_METRICS)].mean()
    rows = []
    for scenario in sorted(table["scenario"].unique()):
        for metric in COMPARED_METRICS:
            etsi = means[metric].get((scenario, PolicyVariant.ETSI.value), math.nan)
            look_ahead = means[metric].get((scenario, PolicyVariant.LOOK_AHEAD.value), math.nan)
            difference = (look_ahead - etsi) / etsi * 100.0 if etsi and not math.isnan(etsi) else math.nan
            rows.append((scenario, metric, etsi, look_ahead, difference))
    return pd.DataFrame(rows, columns=columns)


def sweep(
    configs: Sequence[ScenarioConfig],
    policies: Iterable[Union[PolicyVariant, str]],
    seeds: Sequence[int],
    parallel: int = 1,
) -> SweepResult:
    """
    Run every (config, policy, seed) cell and tabulate the summaries

    Both policies of a seed share mobility, phase and channel streams, so
    differences come from the generation rules alone. A failing cell is
    logged and left out of the table.
    """
    policies = [PolicyVariant(p) for p in policies]
    missing = [name for name, values in (("configs", configs), ("policies", policies), ("seeds", seeds)) if not values]
    if missing:
        raise ConfigValidationError(f"Sweep matrix is empty along: {', '.join(missing)}", missing)

    cells = [SweepCell(config, variant, seed) for config in configs for variant in policies for seed in seeds]
    logger.info(f"Sweep of {len(cells)} cells ({len(configs)} configs x {len(policies)} policies x {len(seeds)} seeds)")

    summaries: List[RunSummary] = []
    failures: List[Tuple[str, str, int, str]] = []

    def collect(cell: SweepCell, outcome) -> None:
        if isinstance(outcome, RunSummary):
            summaries.append(outcome)
            logger.info(f"Cell {cell.config.name}/{cell.variant.value}/seed {cell.seed} done")
            return
        failures.append((cell.config.name, cell.variant.value, cell.seed, str(outcome)))
        logger.warning(f"Cell {cell.config.name}/{cell.variant.value}/seed {cell.seed} failed: {outcome}")

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [(cell, pool.submit(_run_cell, cell)) for cell in cells]
            for cell, future in futures:
                try:
                    collect(cell, future.result())
                except Exception as e:
                    collect(cell, e)
    else:
        for cell in cells:
            try:
                collect(cell, _run_cell(cell))
            except Exception as e:
                collect(cell, e)

    records: List[Dict[str, object]] = [summary.model_dump(mode="json") for summary in summaries]
    table = pd.DataFrame(records, columns=[name for name in RunSummary.model_fields if name != "wall_time_s"])
    return SweepResult(table=table, comparison=compare_policies(table), failures=failures)
