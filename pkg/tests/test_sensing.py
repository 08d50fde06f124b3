#!/usr/bin/env python3
"""
Tests for onboard sensing and line of sight
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from cpmsim.config import SensingSection, load_config
from cpmsim.geometry import HighwayRoad, ManhattanGrid, OpenArea, StatisticsRegion, line_of_sight
from cpmsim.models import VehicleState
from cpmsim.sensing import Sensor, detect

# 3x3 blocks of 100 m with 14 m streets: buildings span [7, 107] on each axis
GRID = ManhattanGrid(3, 3, 100.0, 100.0, 14.0)
OPEN = OpenArea((-1000.0, -1000.0, 1000.0, 1000.0))


def vehicles(*points):
    return [VehicleState(id=i, position=p, speed=10.0) for i, p in enumerate(points)]


class TestLineOfSight:
    """Test building blockage"""

    def test_open_area_always_clear(self):
        assert line_of_sight((0.0, 0.0), (500.0, 500.0), OPEN)

    def test_same_street(self):
        assert line_of_sight((0.0, 20.0), (0.0, 100.0), GRID)

    def test_through_building(self):
        assert not line_of_sight((0.0, 50.0), (114.0, 50.0), GRID)

    def test_along_intersection(self):
        assert line_of_sight((-5.0, 0.0), (200.0, 0.0), GRID)

    def test_many_matches_single(self):
        targets = np.array([[0.0, 100.0], [114.0, 50.0], [200.0, 0.0]])
        clear = GRID.line_of_sight_many((0.0, 0.0), targets)
        assert clear.tolist() == [line_of_sight((0.0, 0.0), tuple(t), GRID) for t in targets]


class TestDetect:
    """Test range and visibility"""

    def test_range(self):
        fleet = vehicles((0.0, 0.0), (100.0, 0.0), (200.0, 0.0))
        assert [o.object_id for o in detect(fleet[0], fleet, OPEN)] == [1]

    def test_range_is_inclusive(self):
        fleet = vehicles((0.0, 0.0), (150.0, 0.0))
        assert [o.object_id for o in detect(fleet[0], fleet, OPEN)] == [1]

    def test_blocked_by_building(self):
        fleet = vehicles((0.0, 50.0), (114.0, 50.0), (0.0, 120.0))
        assert [o.object_id for o in detect(fleet[0], fleet, GRID)] == [2]

    def test_measurements_are_exact(self):
        fleet = vehicles((0.0, 0.0), (30.0, 3.5))
        (obj,) = detect(fleet[0], fleet, OPEN, now=2.5)
        assert obj.position == (30.0, 3.5)
        assert obj.speed == 10.0
        assert obj.timestamp == 2.5

    def test_alone(self):
        fleet = vehicles((0.0, 0.0))
        assert detect(fleet[0], fleet, OPEN) == []


class TestSensor:
    """Test the vectorised sensor used by the scheduler"""

    def test_highway_wraps(self):
        road = HighwayRoad(1000.0, 21.0)
        sensor = Sensor(SensingSection(), road)
        positions = np.array([[10.0, 1.75], [960.0, 1.75], [500.0, 1.75]])
        visible = sensor.visible(0, positions, np.ones(3, dtype=bool))
        assert visible.tolist() == [1]

    def test_grid_torus(self):
        sensor = Sensor(SensingSection(), GRID)
        # 335 m apart in world coordinates, 7 m across the seam
        positions = np.array([[0.0, -5.0], [0.0, 330.0]])
        assert sensor.visible(0, positions, np.ones(2, dtype=bool)).tolist() == [1]

    def test_inactive_vehicles_ignored(self):
        sensor = Sensor(SensingSection(), OPEN)
        positions = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]])
        active = np.array([True, False, True])
        assert sensor.visible(0, positions, active).tolist() == [2]

    def test_vehicle_occlusion(self):
        sensor = Sensor(SensingSection(vehicle_occlusion=True), OPEN)
        positions = np.array([[0.0, 0.0], [20.0, 0.0], [40.0, 0.0], [20.0, 10.0]])
        headings = np.zeros(4)
        visible = sensor.visible(0, positions, np.ones(4, dtype=bool), headings)
        assert visible.tolist() == [1, 3]

    def test_position_noise(self):
        sensor = Sensor(SensingSection(position_noise_std_m=1.0), OPEN, rng=np.random.default_rng(4))
        positions = np.array([[0.0, 0.0], [50.0, 0.0]])
        (obj,) = sensor.measure([1], 0.0, positions, np.array([5.0, 5.0]), np.zeros(2))
        assert obj.position != (50.0, 0.0)
        assert obj.position[0] == pytest.approx(50.0, abs=6.0)


class TestStatisticsRegion:
    """Test the central statistics region"""

    def test_highway_central_share(self):
        config = load_config({"highway": {"length_m": 1000.0}})
        region = StatisticsRegion.for_scenario(config, HighwayRoad(1000.0, 21.0))
        assert (region.x_min, region.x_max) == pytest.approx((300.0, 700.0))
        assert region.contains_point((500.0, 1.75))
        assert not region.contains_point((100.0, 1.75))

    def test_grid_central_blocks(self):
        config = load_config({"statistics": {"manhattan_blocks_x": 1, "manhattan_blocks_y": 1}})
        region = StatisticsRegion.for_scenario(config, GRID)
        assert (region.x_min, region.x_max) == pytest.approx((107.0, 235.0))
