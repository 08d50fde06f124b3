"""Scenario geometry: buildings, line of sight and the statistics region"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import shapely
import shapely.affinity
from shapely.geometry import LineString, Polygon, box

from .config import ScenarioConfig
from .models import Layout, Position

logger = logging.getLogger(__name__)

Bounds = Tuple[float, float, float, float]


class OpenArea:
    """Free space with no obstacles: highway and trace layouts"""

    def __init__(self, bounds: Bounds):
        self.bounds = bounds
        self.buildings: List[Polygon] = []

    def line_of_sight(self, a: Position, b: Position) -> bool:
        return True

    def line_of_sight_many(self, origin: Position, points: np.ndarray) -> np.ndarray:
        return np.ones(len(points), dtype=bool)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        return points


class HighwayRoad(OpenArea):
    """Straight multi-lane road along x whose ends are joined"""

    def __init__(self, length_m: float, width_m: float):
        super().__init__((0.0, 0.0, length_m, width_m))
        self.length_m = length_m

    def wrap(self, points: np.ndarray) -> np.ndarray:
        wrapped = np.array(points, dtype=float, copy=True)
        wrapped[..., 0] = np.mod(wrapped[..., 0], self.length_m)
        return wrapped


class ManhattanGrid(OpenArea):
    """
    Lattice of rectangular buildings separated by streets, joined as a torus

    Street i runs vertically at x = i * pitch_x, street j horizontally at
    y = j * pitch_y. The seam of the torus sits on a building edge, so world
    coordinates span [-w/2, n * pitch - w/2) on each axis.
    """

    def __init__(
        self,
        blocks_x: int,
        blocks_y: int,
        block_width_m: float,
        block_height_m: float,
        street_width_m: float,
    ):
        self.blocks_x = blocks_x
        self.blocks_y = blocks_y
        self.street_width_m = street_width_m
        self.pitch_x = block_width_m + street_width_m
        self.pitch_y = block_height_m + street_width_m
        self.period_x = blocks_x * self.pitch_x
        self.period_y = blocks_y * self.pitch_y
        half = street_width_m / 2.0
        super().__init__((-half, -half, self.period_x - half, self.period_y - half))

        self.buildings = [
            box(
                i * self.pitch_x + half,
                j * self.pitch_y + half,
                (i + 1) * self.pitch_x - half,
                (j + 1) * self.pitch_y - half,
            )
            for i in range(blocks_x)
            for j in range(blocks_y)
        ]
        # Neighbouring copies of the lattice so segments crossing the seam still hit buildings
        tiles = [
            shapely.affinity.translate(building, dx * self.period_x, dy * self.period_y)
            for building in self.buildings
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
        ]
        self._obstacles = shapely.union_all(tiles)
        shapely.prepare(self._obstacles)

    def line_of_sight(self, a: Position, b: Position) -> bool:
        if a == b:
            return not shapely.contains_xy(self._obstacles, a[0], a[1])
        return not self._obstacles.intersects(LineString([a, b]))

    def line_of_sight_many(self, origin: Position, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(points) == 0:
            return np.ones(0, dtype=bool)
        starts = np.broadcast_to(np.asarray(origin, dtype=float), points.shape)
        coords = np.stack([starts, points], axis=1)
        segments = shapely.linestrings(coords)
        blocked = shapely.intersects(self._obstacles, segments)
        return ~np.asarray(blocked, dtype=bool)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        half = self.street_width_m / 2.0
        wrapped = np.array(points, dtype=float, copy=True)
        wrapped[..., 0] = np.mod(wrapped[..., 0] + half, self.period_x) - half
        wrapped[..., 1] = np.mod(wrapped[..., 1] + half, self.period_y) - half
        return wrapped


def line_of_sight(a: Position, b: Position, layout: OpenArea) -> bool:
    """True iff the segment a-b crosses no building; always true on open layouts"""
    return layout.line_of_sight(a, b)


class StatisticsRegion:
    """Axis-aligned area whose vehicles feed the reported metrics"""

    def __init__(self, x_min: float, x_max: float, y_min: float, y_max: float):
        self.x_min = x_min
        self.x_max = x_max
        self.y_min = y_min
        self.y_max = y_max

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        x = points[..., 0]
        y = points[..., 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def contains_point(self, point: Position) -> bool:
        return bool(self.contains(np.asarray(point, dtype=float)))

    @classmethod
    def for_scenario(cls, config: ScenarioConfig, layout: OpenArea) -> "StatisticsRegion":
        stats = config.statistics
        x_min, y_min, x_max, y_max = layout.bounds

        if isinstance(layout, HighwayRoad):
            fraction = stats.highway_fraction
            centre = layout.length_m / 2.0
            x_min = centre - fraction * layout.length_m / 2.0
            x_max = centre + fraction * layout.length_m / 2.0
        elif isinstance(layout, ManhattanGrid):
            nx = min(stats.manhattan_blocks_x, layout.blocks_x)
            ny = min(stats.manhattan_blocks_y, layout.blocks_y)
            i0 = (layout.blocks_x - nx) // 2
            j0 = (layout.blocks_y - ny) // 2
            half = layout.street_width_m / 2.0
            x_min = i0 * layout.pitch_x - half
            x_max = (i0 + nx) * layout.pitch_x + half
            y_min = j0 * layout.pitch_y - half
            y_max = (j0 + ny) * layout.pitch_y + half

        region = cls(
            stats.x_min_m if stats.x_min_m is not None else x_min,
            stats.x_max_m if stats.x_max_m is not None else x_max,
            stats.y_min_m if stats.y_min_m is not None else y_min,
            stats.y_max_m if stats.y_max_m is not None else y_max,
        )
        logger.debug(
            f"Statistics region x=[{region.x_min:.1f}, {region.x_max:.1f}] "
            f"y=[{region.y_min:.1f}, {region.y_max:.1f}]"
        )
        return region


def build_layout(config: ScenarioConfig, trace_bounds: Optional[Bounds] = None) -> OpenArea:
    """Geometry for the configured layout"""
    layout = config.scenario.layout
    if layout == Layout.HIGHWAY:
        highway = config.highway
        return HighwayRoad(highway.length_m, highway.lanes * highway.lane_width_m)
    if layout == Layout.MANHATTAN:
        grid = config.manhattan
        return ManhattanGrid(
            grid.blocks_x,
            grid.blocks_y,
            grid.block_width_m,
            grid.block_height_m,
            grid.street_width_m,
        )
    return OpenArea(trace_bounds or (-math.inf, -math.inf, math.inf, math.inf))


def minimum_image(delta: np.ndarray, layout: OpenArea) -> np.ndarray:
    """Fold displacement vectors onto the shortest periodic image"""
    if isinstance(layout, HighwayRoad):
        delta = np.array(delta, dtype=float, copy=True)
        period = layout.length_m
        delta[..., 0] -= period * np.round(delta[..., 0] / period)
    elif isinstance(layout, ManhattanGrid):
        delta = np.array(delta, dtype=float, copy=True)
        delta[..., 0] -= layout.period_x * np.round(delta[..., 0] / layout.period_x)
        delta[..., 1] -= layout.period_y * np.round(delta[..., 1] / layout.period_y)
    return delta


def distances_from(origin: Position, points: np.ndarray, layout: OpenArea) -> Tuple[np.ndarray, np.ndarray]:
    """Minimum-image offsets and Euclidean distances from one point to many"""
    offsets = minimum_image(np.asarray(points, dtype=float) - np.asarray(origin, dtype=float), layout)
    return offsets, np.hypot(offsets[..., 0], offsets[..., 1])


def union_length(intervals: Sequence[Tuple[float, float]]) -> float:
    """Total length covered by a set of possibly overlapping intervals"""
    total = 0.0
    current_start: Optional[float] = None
    current_end = -math.inf
    for start, end in sorted(intervals):
        if end <= start:
            continue
        if current_start is None or start > current_end:
            if current_start is not None:
                total += current_end - current_start
            current_start, current_end = start, end
        else:
            current_end = max(current_end, end)
    if current_start is not None:
        total += current_end - current_start
    return total
