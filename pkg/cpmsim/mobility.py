"""Vehicle movement: highway, Manhattan grid and trace replay"""

import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import ConfigError, ScenarioConfig, SimulationError
from .geometry import HighwayRoad, ManhattanGrid, OpenArea, build_layout
from .models import Layout, VehicleState

logger = logging.getLogger(__name__)

LEFT, STRAIGHT, RIGHT = 0, 1, 2


class TraceFormatError(SimulationError):
    """Raised when a trajectory trace does not match the documented schema"""

    def __init__(self, message: str, vehicle: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.vehicle = vehicle
        self.line = line


class MobilityModel:
    """Common state and stepping for all movement models"""

    def __init__(self, layout: OpenArea, timestep: float):
        self.layout = layout
        self.timestep = timestep
        self.time = 0.0
        self.positions = np.zeros((0, 2))
        self.speeds = np.zeros(0)
        self.accelerations = np.zeros(0)
        self.headings = np.zeros(0)
        self.lanes = np.zeros(0, dtype=int)
        self.active = np.zeros(0, dtype=bool)

    @property
    def n_vehicles(self) -> int:
        return len(self.speeds)

    def advance(self, to_time: float) -> None:
        """Step the model forward to `to_time`, one timestep at a time"""
        steps = int(round((to_time - self.time) / self.timestep))
        for _ in range(steps):
            self._step()
        self.time = to_time

    def _step(self) -> None:
        raise NotImplementedError

    def velocities(self) -> np.ndarray:
        return self.speeds[:, np.newaxis] * np.column_stack([np.cos(self.headings), np.sin(self.headings)])

    def positions_at(self, t: float) -> np.ndarray:
        """Positions extrapolated linearly from the last mobility step"""
        elapsed = t - self.time
        if elapsed == 0.0 or self.n_vehicles == 0:
            return self.positions.copy()
        return self.layout.wrap(self.positions + self.velocities() * elapsed)

    def active_at(self, t: float) -> np.ndarray:
        return self.active.copy()

    def street_keys(self) -> Optional[np.ndarray]:
        """(axis, street index) per vehicle on a street grid, None elsewhere"""
        return None

    def vehicle_states(self, t: Optional[float] = None) -> List[VehicleState]:
        when = self.time if t is None else t
        positions = self.positions_at(when)
        active = self.active_at(when)
        return [
            VehicleState(
                id=i,
                position=(float(positions[i, 0]), float(positions[i, 1])),
                speed=float(self.speeds[i]),
                acceleration=float(self.accelerations[i]),
                heading=float(self.headings[i]),
                lane=int(self.lanes[i]),
            )
            for i in range(self.n_vehicles)
            if active[i]
        ]

    def iter_states(self, duration: float) -> Iterator[Tuple[float, List[VehicleState]]]:
        """Time-indexed vehicle states at every timestep up to `duration`"""
        k = 0
        while True:
            t = k * self.timestep
            if t > duration + 1e-9:
                return
            self.advance(t)
            yield t, self.vehicle_states()
            k += 1


class HighwayMobility(MobilityModel):
    """
    Multi-lane ring highway with cruise speeds and a safe-gap governor

    The first half of the lanes travels towards +x, the rest towards -x.
    Each lane gets a nominal speed; vehicles jitter around it.
    """

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator, layout: Optional[HighwayRoad] = None):
        highway = config.highway
        traffic = config.traffic
        super().__init__(layout or build_layout(config), traffic.timestep_s)
        self.length_m = highway.length_m
        self.traffic = traffic

        total = int(round(traffic.density_veh_per_km * highway.length_m / 1000.0))
        counts = [total // highway.lanes + (1 if lane < total % highway.lanes else 0) for lane in range(highway.lanes)]
        for lane, count in enumerate(counts):
            if count and highway.length_m / count < 2 * traffic.vehicle_length_m:
                raise ConfigError(
                    f"Density {traffic.density_veh_per_km} veh/km leaves a gap of "
                    f"{highway.length_m / count:.2f} m in lane {lane}, below twice the vehicle length"
                )

        forward_lanes = (highway.lanes + 1) // 2
        lane_dirs = np.array([1.0 if lane < forward_lanes else -1.0 for lane in range(highway.lanes)])
        lane_speeds = self._lane_speeds(config, forward_lanes, rng)

        xs, lanes, desired = [], [], []
        for lane, count in enumerate(counts):
            if count == 0:
                continue
            spacing = highway.length_m / count
            offset = rng.uniform(0.0, spacing)
            xs.append(np.mod(offset + spacing * np.arange(count), highway.length_m))
            nominal, low, high = lane_speeds[lane]
            jitter = rng.uniform(-highway.speed_jitter, highway.speed_jitter, size=count)
            desired.append(np.clip(nominal * (1.0 + jitter), low, high))
            lanes.append(np.full(count, lane))

        if total:
            x = np.concatenate(xs)
            self.lanes = np.concatenate(lanes).astype(int)
            self.desired_speeds = np.concatenate(desired)
        else:
            x = np.zeros(0)
            self.lanes = np.zeros(0, dtype=int)
            self.desired_speeds = np.zeros(0)

        y = (self.lanes + 0.5) * highway.lane_width_m
        self.positions = np.column_stack([x, y]) if total else np.zeros((0, 2))
        self.directions = lane_dirs[self.lanes] if total else np.zeros(0)
        self.headings = np.where(self.directions > 0, 0.0, math.pi)
        self.speeds = self.desired_speeds.copy()
        self.accelerations = np.zeros(total)
        self.active = np.ones(total, dtype=bool)
        logger.info(f"Highway: {total} vehicles on {highway.lanes} lanes over {highway.length_m:.0f} m")

    @staticmethod
    def _lane_speeds(config: ScenarioConfig, forward_lanes: int, rng: np.random.Generator) -> List[Tuple[float, float, float]]:
        """(nominal, min, max) speed per lane"""
        highway = config.highway
        if highway.lane_speed_ranges_mps is not None:
            return [(rng.uniform(low, high), low, high) for low, high in highway.lane_speed_ranges_mps]

        low, high = highway.speed_min_mps, highway.speed_max_mps
        speeds = []
        for lane in range(highway.lanes):
            group = forward_lanes if lane < forward_lanes else highway.lanes - forward_lanes
            position = lane if lane < forward_lanes else lane - forward_lanes
            if group > 1:
                nominal = low + (high - low) * position / (group - 1)
            else:
                nominal = (low + high) / 2.0
            speeds.append((nominal, low, high))
        return speeds

    def _step(self) -> None:
        if self.n_vehicles == 0:
            return
        dt = self.timestep
        traffic = self.traffic
        new_speeds = self.speeds.copy()
        along = np.where(self.directions > 0, self.positions[:, 0], np.mod(-self.positions[:, 0], self.length_m))

        for lane in np.unique(self.lanes):
            members = np.flatnonzero(self.lanes == lane)
            order = members[np.argsort(along[members], kind="stable")]
            new_speeds[order] = governed_speeds(
                along[order],
                self.speeds[order],
                self.desired_speeds[order],
                self.length_m,
                traffic.vehicle_length_m,
                traffic.headway_s,
                traffic.max_accel_mps2,
                traffic.max_decel_mps2,
                dt,
            )

        self.accelerations = (new_speeds - self.speeds) / dt
        self.speeds = new_speeds
        self.positions[:, 0] = np.mod(self.positions[:, 0] + self.directions * new_speeds * dt, self.length_m)


def governed_speeds(
    along: np.ndarray,
    speeds: np.ndarray,
    desired: np.ndarray,
    period: float,
    vehicle_length: float,
    headway: float,
    max_accel: float,
    max_decel: float,
    dt: float,
) -> np.ndarray:
    """
    Next speeds for one ring of vehicles sorted by travel coordinate

    A vehicle closer to its leader than speed x headway slows down by at most
    max_decel * dt (never below the leader's speed); otherwise it returns
    towards its desired speed.
    """
    count = len(speeds)
    if count == 0:
        return speeds.copy()
    if count > 1:
        gaps = np.mod(np.roll(along, -1) - along, period) - vehicle_length
        leader_speeds = np.roll(speeds, -1)
    else:
        gaps = np.full(1, np.inf)
        leader_speeds = speeds.copy()

    too_close = gaps < headway * speeds
    slowing = np.maximum(speeds - max_decel * dt, np.minimum(speeds, leader_speeds))
    cruising = np.where(
        speeds < desired,
        np.minimum(desired, speeds + max_accel * dt),
        np.maximum(desired, speeds - max_decel * dt),
    )
    return np.maximum(np.where(too_close, slowing, cruising), 0.0)


class ManhattanMobility(MobilityModel):
    """
    Vehicles driving on the streets of a block lattice

    Each vehicle sits on one street (axis 0: along x, axis 1: along y) with a
    travel direction and a lane on its right-hand half. At every intersection
    it goes straight or turns according to the turn probabilities; vehicles
    about to turn slow to the intersection speed.
    """

    def __init__(
        self,
        config: ScenarioConfig,
        rng: np.random.Generator,
        routing_rng: np.random.Generator,
        layout: Optional[ManhattanGrid] = None,
        placements: Optional[Sequence[Dict[str, float]]] = None,
    ):
        grid = layout or build_layout(config)
        super().__init__(grid, config.traffic.timestep_s)
        self.grid: ManhattanGrid = grid
        self.settings = config.manhattan
        self.traffic = config.traffic
        self.routing_rng = routing_rng
        self.lanes_per_direction = max(1, self.settings.lanes_per_street // 2)

        if placements is None:
            placements = self._place_vehicles(rng)
        n = len(placements)
        self.axis = np.array([int(p["axis"]) for p in placements], dtype=int)
        self.street = np.array([int(p["street"]) for p in placements], dtype=int)
        self.direction = np.array([float(p["direction"]) for p in placements])
        self.lanes = np.array([int(p.get("lane", 0)) for p in placements], dtype=int)
        self.along = np.array([float(p["s"]) for p in placements])
        self.desired_speeds = np.array([float(p["speed"]) for p in placements])
        self.speeds = self.desired_speeds.copy()
        self.accelerations = np.zeros(n)
        self.active = np.ones(n, dtype=bool)
        self.pending_turn = self._draw_turns(n)
        self._sync_positions()
        logger.info(
            f"Manhattan: {n} vehicles on {self.grid.blocks_x}x{self.grid.blocks_y} blocks "
            f"({self.settings.lanes_per_street} lanes per street)"
        )

    def _place_vehicles(self, rng: np.random.Generator) -> List[Dict[str, float]]:
        grid = self.grid
        lanes = self.lanes_per_direction
        loops = []
        for street in range(grid.blocks_y):
            for direction in (1.0, -1.0):
                for lane in range(lanes):
                    loops.append((0, street, direction, lane, grid.period_x))
        for street in range(grid.blocks_x):
            for direction in (1.0, -1.0):
                for lane in range(lanes):
                    loops.append((1, street, direction, lane, grid.period_y))

        street_length_m = grid.blocks_y * grid.period_x + grid.blocks_x * grid.period_y
        total = int(round(self.traffic.density_veh_per_km * street_length_m / 1000.0))
        weights = np.array([loop[4] for loop in loops])
        quotas = total * weights / weights.sum()
        counts = np.floor(quotas).astype(int)
        remainder = total - counts.sum()
        if remainder > 0:
            order = np.argsort(-(quotas - counts), kind="stable")
            counts[order[:remainder]] += 1

        jitter = self.settings.speed_jitter
        half = grid.street_width_m / 2.0
        placements = []
        for (axis, street, direction, lane, length), count in zip(loops, counts):
            if count == 0:
                continue
            spacing = length / count
            if spacing < 2 * self.traffic.vehicle_length_m:
                raise ConfigError(
                    f"Density {self.traffic.density_veh_per_km} veh/km leaves a gap of "
                    f"{spacing:.2f} m on street {axis}/{street}, below twice the vehicle length"
                )
            offset = rng.uniform(0.0, spacing)
            for k in range(count):
                s = np.mod(offset + k * spacing + half, length) - half
                speed = self.settings.max_speed_mps * (1.0 - rng.uniform(0.0, jitter))
                placements.append(
                    {"axis": axis, "street": street, "direction": direction, "lane": lane, "s": s, "speed": speed}
                )
        return placements

    def _draw_turns(self, count: int) -> np.ndarray:
        if count == 0:
            return np.zeros(0, dtype=int)
        return self.routing_rng.choice(3, size=count, p=list(self.settings.turn_probabilities))

    def _pitch(self) -> np.ndarray:
        return np.where(self.axis == 0, self.grid.pitch_x, self.grid.pitch_y)

    def _period(self) -> np.ndarray:
        return np.where(self.axis == 0, self.grid.period_x, self.grid.period_y)

    def _sync_positions(self) -> None:
        grid = self.grid
        offset = (self.lanes + 0.5) * self.settings.lane_width_m
        street_y = self.street * grid.pitch_y
        street_x = self.street * grid.pitch_x
        horizontal = self.axis == 0
        x = np.where(horizontal, self.along, street_x + self.direction * offset)
        y = np.where(horizontal, street_y - self.direction * offset, self.along)
        self.positions = np.column_stack([x, y]) if len(x) else np.zeros((0, 2))
        self.headings = np.where(
            horizontal,
            np.where(self.direction > 0, 0.0, math.pi),
            np.where(self.direction > 0, math.pi / 2.0, -math.pi / 2.0),
        )

    def _next_intersection(self) -> Tuple[np.ndarray, np.ndarray]:
        """Index and distance of the next intersection centre ahead of each vehicle"""
        pitch = self._pitch()
        ratio = self.along / pitch
        index = np.where(self.direction > 0, np.floor(ratio) + 1, np.ceil(ratio) - 1)
        distance = self.direction * (index * pitch - self.along)
        return index.astype(int), distance

    def street_keys(self) -> Optional[np.ndarray]:
        return np.column_stack([self.axis, self.street])

    def _step(self) -> None:
        n = self.n_vehicles
        if n == 0:
            return
        dt = self.timestep
        traffic = self.traffic
        index, distance = self._next_intersection()

        # Turning vehicles follow a braking profile down to the intersection speed
        v_turn = self.settings.intersection_speed_mps
        slack = np.maximum(distance - self.grid.street_width_m / 2.0, 0.0)
        approach = np.sqrt(v_turn**2 + 2.0 * traffic.max_accel_mps2 * slack)
        targets = np.where(self.pending_turn != STRAIGHT, np.minimum(self.desired_speeds, approach), self.desired_speeds)

        new_speeds = self.speeds.copy()
        period = self._period()
        travel = np.mod(self.direction * self.along, period)
        group = ((self.axis * max(self.grid.blocks_x, self.grid.blocks_y) + self.street) * 2 + (self.direction > 0)) * (
            self.lanes_per_direction
        ) + self.lanes
        for key in np.unique(group):
            members = np.flatnonzero(group == key)
            order = members[np.argsort(travel[members], kind="stable")]
            new_speeds[order] = governed_speeds(
                travel[order],
                self.speeds[order],
                targets[order],
                float(period[order[0]]),
                traffic.vehicle_length_m,
                traffic.headway_s,
                traffic.max_accel_mps2,
                traffic.max_decel_mps2,
                dt,
            )

        self.accelerations = (new_speeds - self.speeds) / dt
        self.speeds = new_speeds
        step = new_speeds * dt

        crossing = step >= distance
        self.along = self.along + self.direction * step
        for i in np.flatnonzero(crossing):
            self._cross(i, int(index[i]), float(step[i] - distance[i]))

        period = self._period()
        half = self.grid.street_width_m / 2.0
        self.along = np.mod(self.along + half, period) - half
        self._sync_positions()

    def _lane_clear(self, i: int, axis: int, street: int, direction: float, along: float) -> bool:
        """
        True when vehicle i can join the given lane at `along`

        Every vehicle already in the lane must be far enough ahead or behind
        that the follower of the pair can brake to its leader's speed before
        the bumpers meet.
        """
        members = (
            (self.axis == axis) & (self.street == street) & (self.direction == direction) & (self.lanes == self.lanes[i])
        )
        members[i] = False
        if not members.any():
            return True
        traffic = self.traffic
        dt = self.timestep
        period = self.grid.period_x if axis == 0 else self.grid.period_y
        ahead = np.mod(direction * (self.along[members] - along), period)
        behind = np.mod(-direction * (self.along[members] - along), period)
        speed = self.speeds[i]
        others = self.speeds[members]

        def clearance(follower: np.ndarray, leader: np.ndarray) -> np.ndarray:
            closing = np.maximum(follower - leader, 0.0)
            return traffic.vehicle_length_m + (follower + closing) * dt + closing**2 / (2.0 * traffic.max_decel_mps2)

        return bool(np.all(ahead >= clearance(speed, others)) and np.all(behind >= clearance(others, speed)))

    def _cross(self, i: int, index: int, remaining: float) -> None:
        """
        Apply the pending turn of vehicle i at the intersection it just reached

        A turn into a lane with no free gap is abandoned and the vehicle goes
        straight on.
        """
        turn = int(self.pending_turn[i])
        self.pending_turn[i] = int(self._draw_turns(1)[0])
        if turn == STRAIGHT:
            return
        grid = self.grid
        direction = self.direction[i]
        if self.axis[i] == 0:
            # left from +x is +y; right from +x is -y
            new_direction = direction if turn == LEFT else -direction
            centre = self.street[i] * grid.pitch_y
            new_street = index % grid.blocks_x
            new_axis = 1
        else:
            # left from +y is -x; right from +y is +x
            new_direction = -direction if turn == LEFT else direction
            centre = self.street[i] * grid.pitch_x
            new_street = index % grid.blocks_y
            new_axis = 0
        new_along = centre + new_direction * remaining
        if not self._lane_clear(i, new_axis, new_street, new_direction, new_along):
            logger.debug(f"Vehicle {i}: lane {new_axis}/{new_street} occupied, going straight")
            return
        self.axis[i] = new_axis
        self.street[i] = new_street
        self.direction[i] = new_direction
        self.along[i] = new_along


class TraceTrack:
    """Samples of one vehicle from a trajectory trace"""

    def __init__(self, label: str):
        self.label = label
        self.times: List[float] = []
        self.points: List[Tuple[float, float]] = []
        self.speeds: List[Optional[float]] = []
        self.headings: List[Optional[float]] = []

    @property
    def start(self) -> float:
        return self.times[0]

    @property
    def end(self) -> float:
        return self.times[-1]

    def has_speeds(self) -> bool:
        return all(speed is not None for speed in self.speeds)

    def has_headings(self) -> bool:
        return all(heading is not None for heading in self.headings)

    def sample(self, t: np.ndarray) -> Dict[str, np.ndarray]:
        """Linear interpolation of position; speed and heading per segment when absent"""
        times = np.asarray(self.times)
        points = np.asarray(self.points, dtype=float)
        t = np.asarray(t, dtype=float)
        x = np.interp(t, times, points[:, 0])
        y = np.interp(t, times, points[:, 1])

        if len(times) > 1:
            segment = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
            delta = points[segment + 1] - points[segment]
            duration = times[segment + 1] - times[segment]
            segment_speed = np.hypot(delta[:, 0], delta[:, 1]) / duration
            segment_heading = np.arctan2(delta[:, 1], delta[:, 0])
        else:
            segment = np.zeros(len(t), dtype=int)
            segment_speed = np.zeros(len(t))
            segment_heading = np.zeros(len(t))

        if self.has_speeds():
            speed = np.interp(t, times, np.asarray(self.speeds, dtype=float))
        else:
            speed = segment_speed
        if self.has_headings():
            heading = np.asarray(self.headings, dtype=float)[segment]
        else:
            heading = segment_heading
        return {"x": x, "y": y, "speed": np.maximum(speed, 0.0), "heading": heading}


class Trace:
    """Trajectories loaded from a trace file, keyed by vehicle label"""

    def __init__(self, tracks: Sequence[TraceTrack]):
        self.tracks = list(tracks)

    @property
    def labels(self) -> List[str]:
        return [track.label for track in self.tracks]

    def __len__(self) -> int:
        return len(self.tracks)

    @property
    def times(self) -> List[float]:
        """Every distinct sample time in the trace"""
        return sorted({t for track in self.tracks for t in track.times})

    def bounds(self) -> Tuple[float, float, float, float]:
        points = [p for track in self.tracks for p in track.points]
        if not points:
            return (0.0, 0.0, 0.0, 0.0)
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        return (min(xs), min(ys), max(xs), max(ys))

    def states_at(self, t: float) -> List[VehicleState]:
        states = []
        for index, track in enumerate(self.tracks):
            if not track.start <= t <= track.end:
                continue
            sample = track.sample(np.array([t]))
            states.append(
                VehicleState(
                    id=index,
                    position=(float(sample["x"][0]), float(sample["y"][0])),
                    speed=float(sample["speed"][0]),
                    heading=float(sample["heading"][0]),
                )
            )
        return states

    def iter_states(self) -> Iterator[Tuple[float, List[VehicleState]]]:
        """States at the trace's native sample times"""
        for t in self.times:
            yield t, self.states_at(t)


def _parse_number(token: str) -> Optional[float]:
    try:
        return float(token)
    except ValueError:
        return None


def load_trace(path: Union[str, Path]) -> Trace:
    """
    Read a whitespace separated trajectory trace

    Each record is `time_s vehicle_id x_m y_m [speed_mps] [heading_rad]`;
    `#` starts a comment and a leading header line is skipped.

    Raises:
        TraceFormatError: wrong field count, non-numeric values, or
            timestamps that do not increase for a vehicle
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise TraceFormatError(f"Cannot read trace {path}: {e}") from e

    tracks: Dict[str, TraceTrack] = {}
    first_record = True
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if first_record:
            first_record = False
            if _parse_number(fields[0]) is None:
                continue
        if not 4 <= len(fields) <= 6:
            raise TraceFormatError(f"{path}:{number}: expected 4 to 6 fields, found {len(fields)}", line=number)

        label = fields[1]
        values = [_parse_number(token) for token in fields[:1] + fields[2:]]
        if any(value is None for value in values):
            raise TraceFormatError(f"{path}:{number}: non-numeric field for vehicle {label}", vehicle=label, line=number)
        t, x, y = values[0], values[1], values[2]
        speed = values[3] if len(values) > 3 else None
        heading = values[4] if len(values) > 4 else None
        if speed is not None and speed < 0:
            raise TraceFormatError(f"{path}:{number}: negative speed for vehicle {label}", vehicle=label, line=number)

        track = tracks.setdefault(label, TraceTrack(label))
        if track.times and t <= track.times[-1]:
            raise TraceFormatError(
                f"{path}:{number}: timestamp {t} for vehicle {label} does not increase "
                f"(previous {track.times[-1]})",
                vehicle=label,
                line=number,
            )
        track.times.append(t)
        track.points.append((x, y))
        track.speeds.append(speed)
        track.headings.append(heading)

    for track in tracks.values():
        if not track.has_speeds() and any(speed is not None for speed in track.speeds):
            logger.warning(f"Vehicle {track.label}: speed column incomplete, deriving speed from positions")

    logger.info(f"Loaded trace {path}: {len(tracks)} vehicles")
    return Trace(list(tracks.values()))


class TraceMobility(MobilityModel):
    """Replays a trace resampled onto the mobility timestep"""

    def __init__(self, trace: Trace, timestep: float, duration: float, layout: Optional[OpenArea] = None):
        x_min, y_min, x_max, y_max = trace.bounds()
        super().__init__(layout or OpenArea((x_min - 1.0, y_min - 1.0, x_max + 1.0, y_max + 1.0)), timestep)
        self.trace = trace
        n = len(trace)
        steps = int(math.floor(duration / timestep + 1e-9)) + 2
        self.grid_times = np.arange(steps) * timestep
        self._x = np.zeros((steps, n))
        self._y = np.zeros((steps, n))
        self._speed = np.zeros((steps, n))
        self._heading = np.zeros((steps, n))
        self._active = np.zeros((steps, n), dtype=bool)
        self._start = np.array([track.start for track in trace.tracks]) if n else np.zeros(0)
        self._end = np.array([track.end for track in trace.tracks]) if n else np.zeros(0)
        for i, track in enumerate(trace.tracks):
            sample = track.sample(self.grid_times)
            self._x[:, i] = sample["x"]
            self._y[:, i] = sample["y"]
            self._speed[:, i] = sample["speed"]
            self._heading[:, i] = sample["heading"]
            self._active[:, i] = (self.grid_times >= track.start - 1e-9) & (self.grid_times <= track.end + 1e-9)
        self._accel = np.zeros((steps, n))
        if steps > 1:
            self._accel[:-1] = np.diff(self._speed, axis=0) / timestep
        self._row = 0
        self.lanes = np.zeros(n, dtype=int)
        self._load_row(0)

    def _load_row(self, row: int) -> None:
        row = min(row, len(self.grid_times) - 1)
        self._row = row
        self.positions = np.column_stack([self._x[row], self._y[row]]) if self._x.shape[1] else np.zeros((0, 2))
        self.speeds = self._speed[row].copy()
        self.accelerations = self._accel[row].copy()
        self.headings = self._heading[row].copy()
        self.active = self._active[row].copy()

    def advance(self, to_time: float) -> None:
        self.time = to_time
        self._load_row(int(round(to_time / self.timestep)))

    def positions_at(self, t: float) -> np.ndarray:
        """Positions interpolated between the surrounding grid rows"""
        if self.n_vehicles == 0:
            return np.zeros((0, 2))
        last = len(self.grid_times) - 1
        row = min(int(math.floor(t / self.timestep + 1e-9)), last)
        frac = t / self.timestep - row
        following = min(row + 1, last)
        if frac <= 1e-12 or following == row:
            return np.column_stack([self._x[row], self._y[row]])
        x = self._x[row] + (self._x[following] - self._x[row]) * frac
        y = self._y[row] + (self._y[following] - self._y[row]) * frac
        return np.column_stack([x, y])

    def active_at(self, t: float) -> np.ndarray:
        return (self._start <= t + 1e-9) & (self._end >= t - 1e-9)


def generate_highway(config: ScenarioConfig, rng: np.random.Generator) -> HighwayMobility:
    if config.scenario.layout != Layout.HIGHWAY:
        raise ConfigError(f"generate_highway needs the highway layout, got {config.scenario.layout.value}")
    return HighwayMobility(config, rng)


def generate_manhattan(
    config: ScenarioConfig, rng: np.random.Generator, routing_rng: np.random.Generator
) -> ManhattanMobility:
    if config.scenario.layout != Layout.MANHATTAN:
        raise ConfigError(f"generate_manhattan needs the manhattan layout, got {config.scenario.layout.value}")
    return ManhattanMobility(config, rng, routing_rng)


def build_mobility(
    config: ScenarioConfig, rng: np.random.Generator, routing_rng: np.random.Generator
) -> MobilityModel:
    """Movement model for the configured layout"""
    layout = config.scenario.layout
    if layout == Layout.HIGHWAY:
        return generate_highway(config, rng)
    if layout == Layout.MANHATTAN:
        return generate_manhattan(config, rng, routing_rng)
    trace = load_trace(config.trace.path)
    return TraceMobility(trace, config.traffic.timestep_s, config.scenario.duration_s)
