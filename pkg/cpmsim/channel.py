"""Broadcast radio channel: path loss, CSMA/CA access and SINR reception"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from itertools import chain
from typing import Callable, Deque, Dict, Generator, List, Optional, Sequence, Tuple

import numpy as np
import simpy

from .clock import EventClass, InvariantViolation, SimClock
from .config import MacSection, RadioSection
from .geometry import OpenArea, distances_from
from .models import Cpm, FrameEvent, Outcome, Position, ReceptionOutcome, VehicleState

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
MIN_DISTANCE_M = 1.0
# Ended frames kept for overlap checks; far longer than any airtime
HISTORY_S = 0.05

OUTCOMES = (Outcome.DECODED, Outcome.COLLISION_LOSS, Outcome.BELOW_SENSITIVITY)
DECODED, COLLISION_LOSS, BELOW_SENSITIVITY = range(3)


def dbm_to_mw(dbm: np.ndarray) -> np.ndarray:
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(mw, dtype=float))


def noise_floor_dbm(radio: RadioSection) -> float:
    """Thermal noise over the channel bandwidth plus the receiver noise figure"""
    return -174.0 + 10.0 * math.log10(radio.bandwidth_hz) + radio.noise_figure_db


def airtime_s(size_bytes: int, radio: RadioSection, mac: MacSection) -> float:
    return mac.preamble_s + size_bytes * 8.0 / radio.data_rate_bps


class WinnerB1PathLoss:
    """
    WINNER+ B1 street-level path loss for vehicle-to-vehicle links

    LOS uses the two-slope model around the breakpoint distance computed from
    effective antenna heights. NLOS uses the street-corner model over the
    two axis-aligned legs, taking the cheaper ordering and never dropping
    below the LOS loss.
    """

    def __init__(self, radio: Optional[RadioSection] = None):
        radio = radio or RadioSection()
        coeff = radio.winner_b1
        self.coeff = coeff
        self.fc_ghz = radio.carrier_hz / 1e9
        effective_height = radio.antenna_height_m - coeff.effective_height_offset_m
        self.breakpoint_m = 4.0 * effective_height * effective_height * radio.carrier_hz / SPEED_OF_LIGHT
        self._near = coeff.los_near_intercept + coeff.los_near_freq * math.log10(self.fc_ghz)
        self._far = (
            coeff.los_far_intercept
            - 2.0 * coeff.los_far_height * math.log10(effective_height)
            + coeff.los_far_freq * math.log10(self.fc_ghz)
        )

    def los(self, distance: np.ndarray) -> np.ndarray:
        d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE_M)
        near = self.coeff.los_near_slope * np.log10(d) + self._near
        far = self.coeff.los_far_slope * np.log10(d) + self._far
        return np.where(d < self.breakpoint_m, near, far)

    def _corner(self, main: np.ndarray, side: np.ndarray) -> np.ndarray:
        coeff = self.coeff
        nj = np.maximum(coeff.nlos_nj_max - coeff.nlos_nj_decay * main, coeff.nlos_nj_min)
        return (
            self.los(main)
            + coeff.nlos_offset
            - coeff.nlos_nj_scale * nj
            + 10.0 * nj * np.log10(side)
            + coeff.nlos_freq * math.log10(self.fc_ghz)
        )

    def nlos(self, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        d1 = np.maximum(np.abs(np.asarray(dx, dtype=float)), MIN_DISTANCE_M)
        d2 = np.maximum(np.abs(np.asarray(dy, dtype=float)), MIN_DISTANCE_M)
        corner = np.minimum(self._corner(d1, d2), self._corner(d2, d1))
        return np.maximum(corner, self.los(np.hypot(dx, dy)))


def path_loss(
    tx: Position,
    rx: Position,
    los: bool,
    shadow_sample: float = 0.0,
    model: Optional[WinnerB1PathLoss] = None,
) -> float:
    """Attenuation in dB between two positions, shadowing included"""
    model = model or WinnerB1PathLoss()
    dx = rx[0] - tx[0]
    dy = rx[1] - tx[1]
    if los:
        loss = model.los(math.hypot(dx, dy))
    else:
        loss = model.nlos(dx, dy)
    return float(loss) + shadow_sample


def max_interference_mw(
    start: float,
    end: float,
    overlaps: Sequence[Tuple[float, float, np.ndarray]],
) -> np.ndarray:
    """Largest summed interference over [start, end) from overlapping (start, end, power) frames"""
    if not overlaps:
        return np.zeros(1)
    cuts = {start, end}
    for o_start, o_end, _ in overlaps:
        if start < o_start < end:
            cuts.add(o_start)
        if start < o_end < end:
            cuts.add(o_end)
    edges = sorted(cuts)
    worst = None
    for a, b in zip(edges, edges[1:]):
        level = 0.0
        for o_start, o_end, power in overlaps:
            if o_start < b and o_end > a:
                level = level + power
        worst = level if worst is None else np.maximum(worst, level)
    return np.asarray(worst if worst is not None else 0.0, dtype=float)


def classify(rx_dbm: np.ndarray, sinr_db: np.ndarray, radio: RadioSection) -> np.ndarray:
    """Outcome code per receiver"""
    below = np.asarray(rx_dbm) < radio.sensitivity_dbm
    decoded = ~below & (np.asarray(sinr_db) >= radio.decode_threshold_db)
    return np.where(below, BELOW_SENSITIVITY, np.where(decoded, DECODED, COLLISION_LOSS))


def receive(
    frame: FrameEvent,
    receiver: VehicleState,
    concurrent: Sequence[FrameEvent],
    radio: Optional[RadioSection] = None,
    layout: Optional[OpenArea] = None,
    model: Optional[WinnerB1PathLoss] = None,
    shadow_db: float = 0.0,
) -> ReceptionOutcome:
    """
    Reception decision for one frame at one receiver

    Interference is the largest summed power of the overlapping frames over
    the airtime; a frame the receiver itself sends counts at full power.
    """
    radio = radio or RadioSection()
    layout = layout or OpenArea((-math.inf, -math.inf, math.inf, math.inf))
    model = model or WinnerB1PathLoss(radio)

    def received_dbm(sender_id: int, sender: Position, power: float, shadow: float = 0.0) -> Tuple[float, float, bool]:
        if sender_id == receiver.id:
            return power, 0.0, True
        offsets, distance = distances_from(sender, np.array([receiver.position]), layout)
        los = layout.line_of_sight(sender, tuple(np.asarray(sender) + offsets[0]))
        loss = model.los(distance[0]) if los else model.nlos(offsets[0, 0], offsets[0, 1])
        return power - float(loss) - shadow, float(distance[0]), los

    rx_dbm, distance, los = received_dbm(frame.sender_id, frame.sender_position, frame.tx_power_dbm, shadow_db)
    overlaps = []
    for other in concurrent:
        if other.frame_id == frame.frame_id:
            continue
        if other.start_time < frame.end_time and other.end_time > frame.start_time:
            power, _, _ = received_dbm(other.sender_id, other.sender_position, other.tx_power_dbm)
            overlaps.append((other.start_time, other.end_time, float(dbm_to_mw(power))))

    interference = float(np.max(max_interference_mw(frame.start_time, frame.end_time, overlaps)))
    noise_mw = float(dbm_to_mw(noise_floor_dbm(radio)))
    sinr_db = rx_dbm - float(mw_to_dbm(noise_mw + interference))
    code = int(classify(np.array([rx_dbm]), np.array([sinr_db]), radio)[0])
    return ReceptionOutcome(
        receiver_id=receiver.id,
        frame_id=frame.frame_id,
        sender_id=frame.sender_id,
        outcome=OUTCOMES[code],
        rx_power_dbm=rx_dbm,
        sinr_db=sinr_db,
        distance_m=distance,
        los=los,
        tx_time=frame.start_time,
        time=frame.end_time,
    )


@dataclass
class Transmission:
    """A frame on air together with its per-vehicle link budget"""
    frame: FrameEvent
    rx_dbm: np.ndarray
    rx_mw: np.ndarray
    distance: np.ndarray
    los: np.ndarray
    eligible: np.ndarray

    @property
    def start(self) -> float:
        return self.frame.start_time

    @property
    def end(self) -> float:
        return self.frame.end_time


@dataclass
class ReceptionBatch:
    """Outcomes of one frame at every eligible receiver"""
    frame: FrameEvent
    receivers: np.ndarray
    outcomes: np.ndarray
    rx_dbm: np.ndarray
    sinr_db: np.ndarray
    distance: np.ndarray
    los: np.ndarray
    time: float = 0.0

    @property
    def decoded_receivers(self) -> np.ndarray:
        return self.receivers[self.outcomes == DECODED]

    def to_outcomes(self) -> List[ReceptionOutcome]:
        return [
            ReceptionOutcome.model_construct(
                receiver_id=int(r),
                frame_id=self.frame.frame_id,
                sender_id=self.frame.sender_id,
                outcome=OUTCOMES[int(code)],
                rx_power_dbm=float(rx),
                sinr_db=float(sinr),
                distance_m=float(d),
                los=bool(los),
                tx_time=self.frame.start_time,
                time=self.time,
            )
            for r, code, rx, sinr, d, los in zip(
                self.receivers, self.outcomes, self.rx_dbm, self.sinr_db, self.distance, self.los
            )
        ]


class Channel:
    """
    Shared medium state for one run

    Tracks the frames on air, the power each vehicle senses, and wakes MAC
    processes waiting for the medium to turn idle or busy.
    """

    def __init__(
        self,
        env: SimClock,
        radio: RadioSection,
        mac: MacSection,
        mobility,
        layout: OpenArea,
        rng: np.random.Generator,
        in_region: Optional[Callable[[Position], bool]] = None,
        on_busy_change: Optional[Callable[[int, bool, float], None]] = None,
    ):
        self.env = env
        self.radio = radio
        self.mac = mac
        self.mobility = mobility
        self.layout = layout
        self.rng = rng
        self.in_region = in_region
        self.on_busy_change = on_busy_change
        self.model = WinnerB1PathLoss(radio)
        self.noise_mw = float(dbm_to_mw(noise_floor_dbm(radio)))
        self.sensing_mw = float(dbm_to_mw(radio.sensing_threshold_dbm))
        self.n = mobility.n_vehicles
        self._busy = np.zeros(self.n, dtype=bool)
        self._active: List[Transmission] = []
        self._history: Deque[Transmission] = deque()
        self._idle_waiters: Dict[int, simpy.Event] = {}
        self._busy_waiters: Dict[int, simpy.Event] = {}
        self._next_frame_id = 0

    def is_busy(self, vehicle_id: int) -> bool:
        return bool(self._busy[vehicle_id])

    def wait_idle(self, vehicle_id: int) -> simpy.Event:
        event = self.env.event()
        self._idle_waiters[vehicle_id] = event
        return event

    def wait_busy(self, vehicle_id: int) -> simpy.Event:
        event = self.env.event()
        self._busy_waiters[vehicle_id] = event
        return event

    def cancel_wait(self, vehicle_id: int) -> None:
        self._idle_waiters.pop(vehicle_id, None)
        self._busy_waiters.pop(vehicle_id, None)

    def link_budget(self, sender: int, positions: np.ndarray, active: np.ndarray) -> Tuple[np.ndarray, ...]:
        """Received power, distance, LOS flag and receiver eligibility for a frame from `sender`"""
        radio = self.radio
        origin = positions[sender]
        offsets, distance = distances_from(origin, positions, self.layout)
        eligible = active.copy()
        eligible[sender] = False
        evaluated = eligible & (distance <= radio.max_range_m)
        index = np.flatnonzero(evaluated)

        los = np.zeros(self.n, dtype=bool)
        if len(index):
            los[index] = self.layout.line_of_sight_many(
                (float(origin[0]), float(origin[1])), origin + offsets[index]
            )
        # one shadowing draw per vehicle per frame keeps the stream independent of geometry
        shadow = self.rng.standard_normal(self.n)

        rx_dbm = np.full(self.n, -np.inf)
        if len(index):
            d = distance[index]
            sigma = np.where(los[index], radio.shadowing_los_db, radio.shadowing_nlos_db)
            loss = np.where(
                los[index],
                self.model.los(d),
                self.model.nlos(offsets[index, 0], offsets[index, 1]),
            )
            rx_dbm[index] = radio.tx_power_dbm - loss - sigma * shadow[index]
        rx_dbm[sender] = radio.tx_power_dbm
        return rx_dbm, distance, los, eligible

    def begin(self, vehicle_id: int, cpm: Cpm) -> Transmission:
        """Put a frame carrying `cpm` on air now"""
        now = self.env.now
        if self._busy[vehicle_id]:
            raise InvariantViolation(
                "Vehicle started a transmission while sensing the channel busy",
                {"now": now, "vehicle": vehicle_id, "frames_on_air": len(self._active)},
            )
        positions = self.mobility.positions_at(now)
        active = self.mobility.active_at(now)
        rx_dbm, distance, los, eligible = self.link_budget(vehicle_id, positions, active)
        sender_position = (float(positions[vehicle_id, 0]), float(positions[vehicle_id, 1]))
        frame = FrameEvent.model_construct(
            frame_id=self._next_frame_id,
            sender_id=vehicle_id,
            sender_position=sender_position,
            tx_power_dbm=self.radio.tx_power_dbm,
            start_time=now,
            airtime=airtime_s(cpm.size_bytes, self.radio, self.mac),
            size_bytes=cpm.size_bytes,
            payload=cpm,
            sender_in_region=bool(self.in_region(sender_position)) if self.in_region else False,
        )
        self._next_frame_id += 1
        rx_mw = np.where(np.isfinite(rx_dbm), dbm_to_mw(rx_dbm), 0.0)
        transmission = Transmission(frame, rx_dbm, rx_mw, distance, los, eligible)
        self._active.append(transmission)
        self._refresh()
        logger.debug(f"Frame {frame.frame_id} from {vehicle_id} on air at {now:.6f}s for {frame.airtime * 1e6:.0f}us")
        return transmission

    def end(self, transmission: Transmission) -> ReceptionBatch:
        """Take a frame off air and decide its reception everywhere"""
        now = self.env.now
        self._active.remove(transmission)
        self._history.append(transmission)
        while self._history and self._history[0].end < now - HISTORY_S:
            self._history.popleft()
        self._refresh()
        return self._evaluate(transmission)

    def _refresh(self) -> None:
        sensed = np.zeros(self.n)
        for transmission in self._active:
            sensed = sensed + transmission.rx_mw
        busy = sensed >= self.sensing_mw
        changed = np.flatnonzero(busy != self._busy)
        self._busy = busy
        now = self.env.now
        for vehicle_id in changed:
            vehicle_id = int(vehicle_id)
            waiters = self._busy_waiters if busy[vehicle_id] else self._idle_waiters
            event = waiters.pop(vehicle_id, None)
            if event is not None:
                event.succeed()
            if self.on_busy_change:
                self.on_busy_change(vehicle_id, bool(busy[vehicle_id]), now)

    def _evaluate(self, transmission: Transmission) -> ReceptionBatch:
        receivers = np.flatnonzero(transmission.eligible)
        overlaps = [
            (other.start, other.end, other.rx_mw[receivers])
            for other in chain(self._active, self._history)
            if other is not transmission and other.start < transmission.end and other.end > transmission.start
        ]
        interference = max_interference_mw(transmission.start, transmission.end, overlaps)
        rx_dbm = transmission.rx_dbm[receivers]
        sinr_db = rx_dbm - mw_to_dbm(self.noise_mw + interference)
        outcomes = classify(rx_dbm, sinr_db, self.radio)
        return ReceptionBatch(
            frame=transmission.frame,
            receivers=receivers,
            outcomes=outcomes,
            rx_dbm=rx_dbm,
            sinr_db=sinr_db,
            distance=transmission.distance[receivers],
            los=transmission.los[receivers],
            time=self.env.now,
        )


def csma_transmit(
    env: SimClock,
    channel: Channel,
    vehicle_id: int,
    mac: MacSection,
    rng: np.random.Generator,
) -> Generator[simpy.Event, object, float]:
    """
    CSMA/CA broadcast access; returns the time the frame may start

    The medium must stay idle for the arbitration gap. A busy medium (before
    or during the gap) adds a backoff of uniform [0, CW] idle slots that
    freezes while the medium is busy and resumes with the remaining slots.
    """
    backoff: Optional[int] = None
    while True:
        if channel.is_busy(vehicle_id):
            yield channel.wait_idle(vehicle_id)
            if backoff is None:
                backoff = int(rng.integers(0, mac.cw + 1))
            continue

        gap = env.at(env.now + mac.aifs_s, EventClass.MAC, vehicle_id)
        busy = channel.wait_busy(vehicle_id)
        yield gap | busy
        channel.cancel_wait(vehicle_id)
        if busy.triggered:
            if backoff is None:
                backoff = int(rng.integers(0, mac.cw + 1))
            continue

        if backoff:
            started = env.now
            countdown = env.at(started + backoff * mac.slot_s, EventClass.MAC, vehicle_id)
            busy = channel.wait_busy(vehicle_id)
            yield countdown | busy
            channel.cancel_wait(vehicle_id)
            if busy.triggered:
                elapsed = int(math.floor((env.now - started) / mac.slot_s + 1e-9))
                backoff = max(backoff - elapsed, 0)
                continue
        return env.now


class MacEntity:
    """FIFO frame queue and CSMA/CA access of one vehicle"""

    def __init__(
        self,
        env: SimClock,
        vehicle_id: int,
        channel: Channel,
        mac: MacSection,
        rng: np.random.Generator,
        on_frame_end: Optional[Callable[[ReceptionBatch], None]] = None,
    ):
        self.env = env
        self.vehicle_id = vehicle_id
        self.channel = channel
        self.mac = mac
        self.rng = rng
        self.on_frame_end = on_frame_end
        self.queue = simpy.Store(env)
        self.sent = 0
        self.process = env.process(self._run())

    def enqueue(self, cpm: Cpm) -> None:
        self.queue.put(cpm)

    def _run(self):
        while True:
            cpm = yield self.queue.get()
            yield from csma_transmit(self.env, self.channel, self.vehicle_id, self.mac, self.rng)
            transmission = self.channel.begin(self.vehicle_id, cpm)
            yield self.env.at(transmission.end, EventClass.FRAME_END, self.vehicle_id)
            batch = self.channel.end(transmission)
            self.sent += 1
            if self.on_frame_end:
                self.on_frame_end(batch)
