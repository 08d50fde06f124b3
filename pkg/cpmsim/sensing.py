"""Onboard sensor model: range plus building line of sight"""

import logging
import math
from typing import Iterable, List, Optional

import numpy as np
import shapely
from shapely.strtree import STRtree

from .config import SensingSection, TrafficSection
from .geometry import OpenArea, distances_from
from .models import PerceivedObject, VehicleState

logger = logging.getLogger(__name__)


class Sensor:
    """
    360 degree range sensor shared by every vehicle of a run

    Detection is range AND line of sight. Measurements are exact unless a
    position noise is configured; vehicle bodies block the view only when
    vehicle occlusion is enabled.
    """

    def __init__(
        self,
        settings: SensingSection,
        layout: OpenArea,
        rng: Optional[np.random.Generator] = None,
        traffic: Optional[TrafficSection] = None,
    ):
        self.range_m = settings.range_m
        self.noise_std_m = settings.position_noise_std_m
        self.vehicle_occlusion = settings.vehicle_occlusion
        self.layout = layout
        self.rng = rng if rng is not None else np.random.default_rng(0)
        traffic = traffic or TrafficSection()
        self.vehicle_length_m = traffic.vehicle_length_m
        self.vehicle_width_m = traffic.vehicle_width_m

    def visible(
        self,
        observer: int,
        positions: np.ndarray,
        active: np.ndarray,
        headings: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Indices of the vehicles `observer` detects, in ascending order"""
        n = len(positions)
        if n == 0:
            return np.zeros(0, dtype=int)
        origin = positions[observer]
        offsets, distances = distances_from(origin, positions, self.layout)
        candidates = active & (distances <= self.range_m)
        candidates[observer] = False
        index = np.flatnonzero(candidates)
        if len(index) == 0:
            return index

        endpoints = np.asarray(origin, dtype=float) + offsets[index]
        clear = self.layout.line_of_sight_many((float(origin[0]), float(origin[1])), endpoints)
        if self.vehicle_occlusion and headings is not None:
            clear &= ~self._occluded(origin, endpoints, headings[index])
        return index[clear]

    def _occluded(self, origin: np.ndarray, endpoints: np.ndarray, headings: np.ndarray) -> np.ndarray:
        """Segments to each candidate that pass through another candidate's body"""
        along_x = np.abs(np.cos(headings)) >= math.sqrt(0.5)
        half_x = np.where(along_x, self.vehicle_length_m, self.vehicle_width_m) / 2.0
        half_y = np.where(along_x, self.vehicle_width_m, self.vehicle_length_m) / 2.0
        bodies = shapely.box(
            endpoints[:, 0] - half_x,
            endpoints[:, 1] - half_y,
            endpoints[:, 0] + half_x,
            endpoints[:, 1] + half_y,
        )
        starts = np.broadcast_to(np.asarray(origin, dtype=float), endpoints.shape)
        segments = shapely.linestrings(np.stack([starts, endpoints], axis=1))
        hits = STRtree(bodies).query(segments, predicate="intersects")
        blocked = np.zeros(len(endpoints), dtype=bool)
        for segment, body in zip(hits[0], hits[1]):
            if segment != body:
                blocked[segment] = True
        return blocked

    def measure(
        self,
        index: Iterable[int],
        now: float,
        positions: np.ndarray,
        speeds: np.ndarray,
        accelerations: np.ndarray,
    ) -> List[PerceivedObject]:
        """PerceivedObject entries for detected vehicles, sorted by id"""
        index = np.asarray(list(index), dtype=int)
        measured = positions[index]
        if self.noise_std_m > 0 and len(index):
            measured = measured + self.rng.normal(0.0, self.noise_std_m, size=measured.shape)
        return [
            PerceivedObject.model_construct(
                object_id=int(j),
                position=(float(p[0]), float(p[1])),
                speed=float(speeds[j]),
                acceleration=float(accelerations[j]),
                timestamp=now,
            )
            for j, p in zip(index, measured)
        ]


def detect(
    observer: VehicleState,
    all_vehicles: Iterable[VehicleState],
    layout: OpenArea,
    sensing: Optional[SensingSection] = None,
    now: float = 0.0,
) -> List[PerceivedObject]:
    """Every other vehicle within sensor range and in line of sight of `observer`"""
    vehicles = sorted(all_vehicles, key=lambda v: v.id)
    others = [v for v in vehicles if v.id != observer.id]
    if not others:
        return []
    ordered = [observer] + others
    positions = np.array([v.position for v in ordered], dtype=float)
    speeds = np.array([v.speed for v in ordered])
    accelerations = np.array([v.acceleration for v in ordered])
    headings = np.array([v.heading for v in ordered])
    sensor = Sensor(sensing or SensingSection(), layout)
    index = sensor.visible(0, positions, np.ones(len(ordered), dtype=bool), headings)
    objects = sensor.measure(index, now, positions, speeds, accelerations)
    # Local indices back to vehicle ids
    return [
        obj.model_copy(update={"object_id": ordered[obj.object_id].id})
        for obj in objects
    ]
