"""Scripted detection streams reproducing the two toy generation scenarios"""

import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

from .cpm_engine import CpmGenerator
from .models import Cpm, CpmSizeModel, GenerationPolicy, PerceivedObject, PolicyVariant, VehicleState

logger = logging.getLogger(__name__)

SCENARIO_SPEED_MPS = 70.0 / 3.6
SCENARIO_DURATION_S = 1.0


class ScriptedObject(NamedTuple):
    """
    An object moving along x with constant acceleration once it appears

    `hidden` lists [start, end) intervals during which it is out of sensor
    range; it keeps moving meanwhile.
    """
    object_id: int
    appears_at: float
    start: Tuple[float, float]
    speed: float
    acceleration: float = 0.0
    hidden: Tuple[Tuple[float, float], ...] = ()

    def visible(self, t: float) -> bool:
        if self.appears_at > t + 1e-9:
            return False
        return not any(start - 1e-9 <= t < end - 1e-9 for start, end in self.hidden)

    def position(self, t: float) -> Tuple[float, float]:
        elapsed = t - self.appears_at
        along = self.speed * elapsed + 0.5 * self.acceleration * elapsed * elapsed
        return self.start[0] + along, self.start[1]


def toy_scenario(number: int, speed_mps: float = SCENARIO_SPEED_MPS) -> List[ScriptedObject]:
    """
    Object scripts of the two toy scenarios

    Scenario 1: six objects detected together at t=0.
    Scenario 2: two new objects appear every 100 ms over the first 300 ms.
    All objects drive at 70 km/h on parallel lanes ahead of the observer.
    """
    if number == 1:
        return [ScriptedObject(i, 0.0, (20.0, 3.5 * i), speed_mps) for i in range(6)]
    if number == 2:
        return [ScriptedObject(i, 0.1 * (i // 2), (20.0, 3.5 * i), speed_mps) for i in range(6)]
    raise ValueError(f"Unknown scenario {number}; expected 1 or 2")


def scripted_detections(objects: Sequence[ScriptedObject], now: float) -> List[PerceivedObject]:
    detections = []
    for obj in objects:
        if not obj.visible(now):
            continue
        elapsed = now - obj.appears_at
        detections.append(
            PerceivedObject(
                object_id=obj.object_id,
                position=obj.position(now),
                speed=obj.speed + obj.acceleration * elapsed,
                acceleration=obj.acceleration,
                timestamp=now,
            )
        )
    return detections


def replay(
    objects: Sequence[ScriptedObject],
    policy: GenerationPolicy,
    duration_s: float = SCENARIO_DURATION_S,
    size_model: Optional[CpmSizeModel] = None,
) -> List[Cpm]:
    """CPMs a stationary observer generates from a scripted detection stream"""
    generator = CpmGenerator(0, policy, size_model)
    observer = VehicleState(id=0, position=(0.0, 0.0), speed=0.0)
    period = policy.t_gen_cpm_s
    cpms = []
    k = 0
    while k * period < duration_s - 1e-9:
        now = k * period
        cpm = generator.check(now, scripted_detections(objects, now), observer)
        if cpm is not None:
            cpms.append(cpm)
        k += 1
    logger.debug(f"Replay under {policy.variant.value}: {len(cpms)} CPMs")
    return cpms


def format_schedule(cpms: Sequence[Cpm], variant: PolicyVariant) -> str:
    lines = [f"{variant.value}: {len(cpms)} CPMs"]
    for cpm in cpms:
        ids = ",".join(str(i) for i in cpm.object_ids)
        lines.append(
            f"  t={cpm.generation_time:.1f}s objects={cpm.object_count} [{ids}] "
            f"size={cpm.size_bytes}B sic={'yes' if cpm.has_sic else 'no'}"
        )
    if cpms:
        mean = sum(cpm.object_count for cpm in cpms) / len(cpms)
        lines.append(f"  mean objects per CPM: {mean:.2f}")
    return "\n".join(lines)
