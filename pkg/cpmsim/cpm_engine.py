"""CPM generation rules: ETSI triggers, look-ahead anticipation and assembly"""

import logging
import math
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .geometry import OpenArea, minimum_image
from .models import (
    Cpm,
    CpmSizeModel,
    GenerationPolicy,
    PerceivedObject,
    PolicyVariant,
    TrackedObjectRecord,
    VehicleState,
)

logger = logging.getLogger(__name__)

# Comparisons absorb accumulated float error in check times
EPSILON = 1e-9
MAX_OBJECTS = 128


def object_deltas(
    record: TrackedObjectRecord,
    detection: PerceivedObject,
    now: float,
    layout: Optional[OpenArea] = None,
) -> Tuple[float, float, float]:
    """ΔP, ΔS and ΔT of a detection against its last inclusion; ΔP goes the short way round a ring or torus"""
    delta = (detection.position[0] - record.position[0], detection.position[1] - record.position[1])
    if layout is not None:
        delta = minimum_image(delta, layout)
    return math.hypot(delta[0], delta[1]), abs(detection.speed - record.speed), now - record.included_at


def _is_new(record: Optional[TrackedObjectRecord]) -> bool:
    return record is None or not record.ever_included


def _exceeds(dp: float, ds: float, dt: float, policy: GenerationPolicy) -> bool:
    return (
        dp > policy.position_threshold_m + EPSILON
        or ds > policy.speed_threshold_mps + EPSILON
        or dt > policy.time_threshold_s + EPSILON
    )


def check_etsi_triggers(
    records: Mapping[int, TrackedObjectRecord],
    detections: Iterable[PerceivedObject],
    now: float,
    policy: GenerationPolicy,
    layout: Optional[OpenArea] = None,
) -> Tuple[bool, List[int]]:
    """
    Objects the ETSI rules require in a CPM at this check

    An object is included when it is new (no record, or never included) or
    when its position, speed or elapsed time since the last inclusion changed
    by strictly more than the policy thresholds.

    Returns:
        (triggered, object ids to include in detection order)
    """
    include = []
    for detection in detections:
        record = records.get(detection.object_id)
        if _is_new(record):
            include.append(detection.object_id)
            continue
        if _exceeds(*object_deltas(record, detection, now, layout), policy):
            include.append(detection.object_id)
    return bool(include), include


def look_ahead_extension(
    records: Mapping[int, TrackedObjectRecord],
    detections: Iterable[PerceivedObject],
    now: float,
    policy: GenerationPolicy,
    already_included: Iterable[int],
    layout: Optional[OpenArea] = None,
) -> List[int]:
    """
    Objects predicted to trigger at the next check, assuming constant acceleration

    Only called once a CPM is already triggered. With horizon h:
    NextΔP = ΔP + S*h + A*h²/2, NextΔS = ΔS + A*h, NextΔT = ΔT + h.
    """
    horizon = policy.horizon_s
    included = set(already_included)
    extra = []
    for detection in detections:
        if detection.object_id in included:
            continue
        record = records.get(detection.object_id)
        if _is_new(record):
            extra.append(detection.object_id)
            continue
        dp, ds, dt = object_deltas(record, detection, now, layout)
        next_dp = dp + detection.speed * horizon + 0.5 * detection.acceleration * horizon * horizon
        next_ds = ds + detection.acceleration * horizon
        next_dt = dt + horizon
        if _exceeds(next_dp, next_ds, next_dt, policy):
            extra.append(detection.object_id)
    return extra


def fallback_timer(last_cpm_time: Optional[float], now: float, interval: float = 1.0) -> bool:
    """True when at least `interval` has passed since the last CPM (or none was sent)"""
    if last_cpm_time is None:
        return True
    return now - last_cpm_time >= interval - EPSILON


def assemble_cpm(
    sender: VehicleState,
    include: Sequence[PerceivedObject],
    now: float,
    sic_due: bool,
    size_model: Optional[CpmSizeModel] = None,
    policy: PolicyVariant = PolicyVariant.ETSI,
    staleness: Optional[Mapping[int, float]] = None,
    max_objects: int = MAX_OBJECTS,
) -> Cpm:
    """
    Build a CPM carrying the current measurements of `include`

    More than `max_objects` objects keeps the stalest ones (largest ΔT,
    never-included objects first) and logs a warning.
    """
    size_model = size_model or CpmSizeModel()
    objects = list(include)
    if len(objects) > max_objects:
        ages = staleness or {}
        objects.sort(key=lambda obj: (-ages.get(obj.object_id, math.inf), obj.object_id))
        dropped = len(objects) - max_objects
        objects = sorted(objects[:max_objects], key=lambda obj: obj.object_id)
        logger.warning(
            f"Vehicle {sender.id} at t={now:.3f}s: {dropped} objects over the {max_objects}-object CPM limit deferred"
        )

    return Cpm(
        sender_id=sender.id,
        sender_position=sender.position,
        generation_time=now,
        has_sic=sic_due,
        objects=objects,
        size_bytes=size_model.size(len(objects), sic_due),
        header_bytes=size_model.header_bytes(sic_due),
        policy=policy,
    )


class CpmGenerator:
    """
    Per-vehicle CPM generation state machine

    Keeps one TrackedObjectRecord per object seen within the record grace
    period, runs the policy at each check and updates the records of the
    objects it includes.
    """

    def __init__(
        self,
        vehicle_id: int,
        policy: GenerationPolicy,
        size_model: Optional[CpmSizeModel] = None,
        keep_history: bool = False,
        layout: Optional[OpenArea] = None,
    ):
        self.vehicle_id = vehicle_id
        self.layout = layout
        self.policy = policy
        self.size_model = size_model or CpmSizeModel()
        self.records: Dict[int, TrackedObjectRecord] = {}
        self.last_cpm_time: Optional[float] = None
        self.last_sic_time: Optional[float] = None
        self.keep_history = keep_history
        self.history: Dict[int, List[float]] = defaultdict(list)
        self.cpm_count = 0

    def _refresh_records(self, now: float, detections: Sequence[PerceivedObject]) -> None:
        for detection in detections:
            record = self.records.get(detection.object_id)
            if record is None:
                self.records[detection.object_id] = TrackedObjectRecord.model_construct(
                    object_id=detection.object_id,
                    position=None,
                    speed=0.0,
                    included_at=None,
                    ever_included=False,
                    last_seen=now,
                )
            else:
                record.last_seen = now
        grace = self.policy.record_grace_s
        expired = [oid for oid, record in self.records.items() if now - record.last_seen > grace + EPSILON]
        for oid in expired:
            del self.records[oid]

    def staleness(self, detections: Iterable[PerceivedObject], now: float) -> Dict[int, float]:
        """ΔT per detected object; never-included objects are infinitely stale"""
        ages = {}
        for detection in detections:
            record = self.records.get(detection.object_id)
            ages[detection.object_id] = math.inf if _is_new(record) else now - record.included_at
        return ages

    def check(self, now: float, detections: Sequence[PerceivedObject], sender: VehicleState) -> Optional[Cpm]:
        """Run one generation check; returns the CPM to send, if any"""
        policy = self.policy
        self._refresh_records(now, detections)

        triggered, include_ids = check_etsi_triggers(self.records, detections, now, policy, self.layout)
        if triggered and policy.variant == PolicyVariant.LOOK_AHEAD:
            include_ids = include_ids + look_ahead_extension(
                self.records, detections, now, policy, include_ids, self.layout
            )

        if not triggered and not fallback_timer(self.last_cpm_time, now, policy.fallback_interval_s):
            return None

        chosen = set(include_ids)
        include = [detection for detection in detections if detection.object_id in chosen]
        staleness = self.staleness(include, now) if len(include) > policy.max_objects else None
        sic_due = fallback_timer(self.last_sic_time, now, policy.sic_interval_s)
        cpm = assemble_cpm(
            sender,
            include,
            now,
            sic_due,
            self.size_model,
            policy.variant,
            staleness=staleness,
            max_objects=policy.max_objects,
        )

        for obj in cpm.objects:
            record = self.records[obj.object_id]
            record.position = obj.position
            record.speed = obj.speed
            record.included_at = now
            record.ever_included = True
            if self.keep_history:
                self.history[obj.object_id].append(now)

        self.last_cpm_time = now
        if sic_due:
            self.last_sic_time = now
        self.cpm_count += 1
        logger.debug(
            f"Vehicle {self.vehicle_id} t={now:.3f}s CPM objects={cpm.object_count} "
            f"size={cpm.size_bytes}B sic={cpm.has_sic}"
        )
        return cpm
