"""Ordered simulation clock and seeded random streams"""

import logging
import zlib
from enum import IntEnum
from heapq import heappush
from typing import Any, Dict, Optional

import numpy as np
import simpy
from simpy.core import NORMAL
from simpy.events import Event, Timeout

from .config import SimulationError

logger = logging.getLogger(__name__)


class InvariantViolation(SimulationError):
    """Raised when the running simulation reaches an impossible state"""

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.state = state or {}

    def dump(self) -> str:
        lines = [str(self)]
        for key, value in self.state.items():
            lines.append(f"  {key}: {value}")
        return "\n".join(lines)


class EventClass(IntEnum):
    """Tie-break rank for events sharing a timestamp"""
    CASCADE = 0
    MOBILITY = 1
    FRAME_END = 2
    MAC = 3
    GENERATION_CHECK = 4
    METRICS = 5


class ScheduledAt(Timeout):
    """Timeout firing at an absolute time with an explicit tie-break order"""

    def __init__(
        self,
        env: "SimClock",
        when: float,
        event_class: EventClass,
        vehicle_id: int = -1,
        value: Any = None,
    ):
        self.at = when
        self.order = (int(event_class), vehicle_id)
        super().__init__(env, when - env.now, value)


class SimClock(simpy.Environment):
    """
    simpy environment with a total event order

    Events fire by (time, event class, vehicle id, insertion). Events created
    by simpy itself (process resumptions, conditions, store hand-offs) rank as
    CASCADE so they run before any new work at the same instant.
    """

    def schedule(self, event: Event, priority: int = NORMAL, delay: float = 0) -> None:
        when = getattr(event, "at", None)
        if when is None:
            when = self._now + delay
        if when < self._now:
            raise InvariantViolation(
                "Event scheduled in the past",
                {"now": self._now, "requested": when, "event": repr(event)},
            )
        event_class, vehicle_id = getattr(event, "order", (int(EventClass.CASCADE), -1))
        heappush(self._queue, (when, (event_class, vehicle_id, priority), next(self._eid), event))

    def at(self, when: float, event_class: EventClass, vehicle_id: int = -1, value: Any = None) -> ScheduledAt:
        """Event firing at absolute time `when`"""
        if when < self._now:
            raise InvariantViolation(
                "Event requested before the current time",
                {"now": self._now, "requested": when, "class": event_class.name, "vehicle": vehicle_id},
            )
        return ScheduledAt(self, when, event_class, vehicle_id, value)


def random_stream(seed: int, subsystem: str) -> np.random.Generator:
    """Independent generator for one stochastic subsystem, derived from the master seed"""
    key = zlib.crc32(subsystem.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))
