#!/usr/bin/env python3
"""
Tests for highway, Manhattan and trace movement
"""

import math
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for imports
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from cpmsim.config import ConfigError, load_config
from cpmsim.geometry import StatisticsRegion
from cpmsim.mobility import (
    STRAIGHT,
    HighwayMobility,
    ManhattanMobility,
    TraceFormatError,
    TraceMobility,
    build_mobility,
    generate_highway,
    generate_manhattan,
    governed_speeds,
    load_trace,
)

CONFIG_DIR = Path(parent_dir) / "configs"


def highway_config(**traffic):
    return load_config({"highway": {"length_m": 1000.0}, "traffic": {"density_veh_per_km": 60.0, **traffic}})


def grid_config(turns=(0.0, 1.0, 0.0), density=25.0):
    return load_config(
        {
            "scenario": {"layout": "manhattan"},
            "manhattan": {
                "blocks_x": 3,
                "blocks_y": 3,
                "block_width_m": 100.0,
                "block_height_m": 100.0,
                "turn_probabilities": list(turns),
            },
            "traffic": {"density_veh_per_km": density},
        }
    )


def one_vehicle(config, **placement):
    defaults = {"axis": 0, "street": 1, "direction": 1.0, "lane": 0, "s": 10.0, "speed": 10.0}
    defaults.update(placement)
    return ManhattanMobility(
        config, np.random.default_rng(0), np.random.default_rng(1), placements=[defaults]
    )


def lane_travel(mobility):
    """(lane key, travel coordinate, lane period) per vehicle"""
    if isinstance(mobility, HighwayMobility):
        travel = np.where(
            mobility.directions > 0, mobility.positions[:, 0], np.mod(-mobility.positions[:, 0], mobility.length_m)
        )
        return mobility.lanes.copy(), travel, np.full(mobility.n_vehicles, mobility.length_m)
    period = np.where(mobility.axis == 0, mobility.grid.period_x, mobility.grid.period_y)
    keys = np.column_stack([mobility.axis, mobility.street, mobility.direction > 0, mobility.lanes])
    _, lane_ids = np.unique(keys, axis=0, return_inverse=True)
    return lane_ids.ravel(), np.mod(mobility.direction * mobility.along, period), period


def closest_same_lane_spacing(mobility):
    """Smallest centre-to-centre distance between consecutive vehicles of a lane"""
    lane_ids, travel, period = lane_travel(mobility)
    closest = math.inf
    for lane in np.unique(lane_ids):
        members = np.flatnonzero(lane_ids == lane)
        if len(members) < 2:
            continue
        ordered = np.sort(travel[members])
        spacing = np.mod(np.roll(ordered, -1) - ordered, period[members[0]])
        closest = min(closest, float(spacing.min()))
    return closest


TRACE_TEXT = """time id x y
# two vehicles, b joins later
0.0 a 0.0 0.0
1.0 a 10.0 0.0
0.5 b 50.0 0.0
1.5 b 50.0 20.0
"""


class TestHighway:
    """Test the ring highway"""

    def test_vehicle_count_and_lanes(self):
        mobility = HighwayMobility(highway_config(), np.random.default_rng(0))
        assert mobility.n_vehicles == 60
        assert np.bincount(mobility.lanes).tolist() == [10] * 6
        assert np.allclose(mobility.positions[:, 1], (mobility.lanes + 0.5) * 3.5)

    def test_directions_by_lane(self):
        mobility = HighwayMobility(highway_config(), np.random.default_rng(0))
        forward = mobility.lanes < 3
        assert np.all(mobility.headings[forward] == 0.0)
        assert np.all(mobility.headings[~forward] == math.pi)

    def test_speeds_within_range(self):
        config = highway_config()
        mobility = HighwayMobility(config, np.random.default_rng(3))
        mobility.advance(5.0)
        assert np.all(mobility.speeds <= config.highway.speed_max_mps + 1e-9)
        assert np.all(mobility.speeds >= 0.0)
        assert np.all((mobility.positions[:, 0] >= 0.0) & (mobility.positions[:, 0] <= 1000.0))

    def test_same_seed_same_vehicles(self):
        first = HighwayMobility(highway_config(), np.random.default_rng(5))
        second = HighwayMobility(highway_config(), np.random.default_rng(5))
        first.advance(2.0)
        second.advance(2.0)
        assert np.array_equal(first.positions, second.positions)

    def test_too_dense(self):
        with pytest.raises(ConfigError):
            HighwayMobility(highway_config(density_veh_per_km=1300.0), np.random.default_rng(0))

    def test_empty_road(self):
        mobility = HighwayMobility(highway_config(density_veh_per_km=0.0), np.random.default_rng(0))
        mobility.advance(1.0)
        assert mobility.n_vehicles == 0
        assert mobility.vehicle_states() == []


class TestGovernedSpeeds:
    """Test the safe-gap governor"""

    def test_lone_vehicle_accelerates(self):
        speeds = governed_speeds(
            np.array([0.0]), np.array([20.0]), np.array([25.0]), 1000.0, 5.0, 1.5, 2.0, 4.5, 0.1
        )
        assert speeds[0] == pytest.approx(20.2)

    def test_follower_brakes(self):
        speeds = governed_speeds(
            np.array([0.0, 20.0]),
            np.array([30.0, 10.0]),
            np.array([30.0, 30.0]),
            1000.0, 5.0, 1.5, 2.0, 4.5, 0.1,
        )
        assert speeds[0] == pytest.approx(29.55)
        assert speeds[1] == pytest.approx(10.2)

    def test_cruise_down_to_desired(self):
        speeds = governed_speeds(
            np.array([0.0]), np.array([30.0]), np.array([29.9]), 1000.0, 5.0, 1.5, 2.0, 4.5, 0.1
        )
        assert speeds[0] == pytest.approx(29.9)


class TestManhattan:
    """Test the block lattice"""

    def test_vehicle_count(self):
        mobility = ManhattanMobility(grid_config(), np.random.default_rng(0), np.random.default_rng(1))
        # 3 + 3 streets of 342 m at 25 veh/km
        assert mobility.n_vehicles == 51

    def test_straight_vehicle_keeps_lane(self):
        mobility = one_vehicle(grid_config())
        mobility.advance(1.0)
        assert mobility.positions[0, 0] == pytest.approx(20.0)
        assert mobility.positions[0, 1] == pytest.approx(114.0 - 1.75)
        assert mobility.headings[0] == 0.0

    def test_wraps_around_the_torus(self):
        mobility = one_vehicle(grid_config(), s=330.0)
        mobility.advance(2.0)
        assert mobility.positions[0, 0] == pytest.approx(8.0)
        assert mobility.street_keys().tolist() == [[0, 1]]

    def test_left_turn(self):
        mobility = one_vehicle(grid_config(turns=(1.0, 0.0, 0.0)), s=100.0, speed=5.0)
        mobility.advance(3.0)
        assert mobility.street_keys().tolist() == [[1, 1]]
        assert mobility.headings[0] == pytest.approx(math.pi / 2.0)
        assert mobility.positions[0, 0] == pytest.approx(114.0 + 1.75)
        assert mobility.positions[0, 1] == pytest.approx(115.0)

    def test_turning_vehicle_slows_for_intersection(self):
        config = grid_config(turns=(0.0, 0.0, 1.0))
        mobility = one_vehicle(config, s=80.0, speed=config.manhattan.max_speed_mps)
        mobility.advance(1.0)
        assert mobility.speeds[0] < config.manhattan.max_speed_mps

    def test_turn_into_occupied_lane_goes_straight(self):
        config = grid_config(turns=(1.0, 0.0, 0.0))
        turner = {"axis": 0, "street": 1, "direction": 1.0, "lane": 0, "s": 100.0, "speed": 5.0}
        blocker = {"axis": 1, "street": 1, "direction": 1.0, "lane": 0, "s": 104.0, "speed": 5.0}
        mobility = ManhattanMobility(
            config, np.random.default_rng(0), np.random.default_rng(1), placements=[turner, blocker]
        )
        mobility.pending_turn[1] = STRAIGHT
        mobility.advance(3.0)
        # the blocker sits about 4 m past the junction when the turner arrives
        assert mobility.street_keys().tolist() == [[0, 1], [1, 1]]
        assert mobility.headings[0] == 0.0
        assert mobility.positions[0, 0] == pytest.approx(115.0)


class TestMobilityInvariants:
    """Test properties every movement model keeps at every step"""

    def test_no_overlap_on_the_highway(self):
        config = highway_config()
        mobility = HighwayMobility(config, np.random.default_rng(2))
        for _ in range(300):
            mobility.advance(mobility.time + mobility.timestep)
            assert closest_same_lane_spacing(mobility) >= config.traffic.vehicle_length_m - 1e-6

    def test_no_overlap_in_a_minute_of_urban_traffic(self):
        config = load_config(CONFIG_DIR / "urban_low.toml")
        mobility = ManhattanMobility(config, np.random.default_rng(0), np.random.default_rng(1))
        for _ in range(600):
            mobility.advance(mobility.time + mobility.timestep)
            assert closest_same_lane_spacing(mobility) >= config.traffic.vehicle_length_m - 1e-6

    def test_no_overlap_with_turns_into_busy_streets(self):
        config = grid_config(turns=(0.25, 0.5, 0.25), density=60.0)
        mobility = ManhattanMobility(config, np.random.default_rng(4), np.random.default_rng(5))
        for _ in range(600):
            mobility.advance(mobility.time + mobility.timestep)
            assert closest_same_lane_spacing(mobility) >= config.traffic.vehicle_length_m - 1e-6

    @pytest.mark.parametrize("layout", ["highway", "manhattan"])
    def test_speed_change_per_step_bounded_by_braking(self, layout):
        if layout == "highway":
            config = highway_config()
            mobility = HighwayMobility(config, np.random.default_rng(6))
        else:
            config = grid_config(turns=(0.25, 0.5, 0.25), density=60.0)
            mobility = ManhattanMobility(config, np.random.default_rng(6), np.random.default_rng(7))
        limit = config.traffic.max_decel_mps2 * config.traffic.timestep_s + 1e-9
        previous = None
        for _, states in mobility.iter_states(20.0):
            speeds = np.array([s.speed for s in states])
            if previous is not None:
                assert np.all(np.abs(speeds - previous) <= limit)
            previous = speeds

    def test_highway_density_steady_over_ten_second_windows(self):
        config = load_config(CONFIG_DIR / "highway_low.toml")
        mobility = HighwayMobility(config, np.random.default_rng(0))
        region = StatisticsRegion.for_scenario(config, mobility.layout)
        expected = config.traffic.density_veh_per_km * (region.x_max - region.x_min) / 1000.0
        counts = []
        for _, states in mobility.iter_states(30.0):
            counts.append(int(region.contains(np.array([s.position for s in states])).sum()))
        window = int(round(10.0 / config.traffic.timestep_s))
        averages = np.convolve(counts, np.ones(window) / window, mode="valid")
        assert expected == pytest.approx(120.0)
        assert np.all(np.abs(averages - expected) <= 0.1 * expected)

    def test_iter_states_samples_every_timestep(self):
        mobility = HighwayMobility(highway_config(), np.random.default_rng(0))
        samples = list(mobility.iter_states(1.0))
        assert [t for t, _ in samples] == pytest.approx([0.1 * k for k in range(11)])
        assert all(len(states) == 60 for _, states in samples)
        assert mobility.time == pytest.approx(1.0)


class TestTrace:
    """Test trace loading and replay"""

    def test_load(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text(TRACE_TEXT, encoding="utf-8")
        trace = load_trace(path)
        assert trace.labels == ["a", "b"]
        states = trace.states_at(0.5)
        assert [s.id for s in states] == [0, 1]
        assert states[0].position == pytest.approx((5.0, 0.0))
        assert states[0].speed == pytest.approx(10.0)

    def test_iter_states_at_sample_times(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text(TRACE_TEXT, encoding="utf-8")
        samples = [(t, [s.id for s in states]) for t, states in load_trace(path).iter_states()]
        assert samples == [(0.0, [0]), (0.5, [0, 1]), (1.0, [0, 1]), (1.5, [1])]

    def test_vehicle_absent_outside_its_span(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text(TRACE_TEXT, encoding="utf-8")
        mobility = TraceMobility(load_trace(path), 0.1, 1.5)
        mobility.advance(0.4)
        assert mobility.active.tolist() == [True, False]
        mobility.advance(0.5)
        assert mobility.active.tolist() == [True, True]
        assert mobility.positions[0].tolist() == pytest.approx([5.0, 0.0])
        assert mobility.positions_at(0.55)[0].tolist() == pytest.approx([5.5, 0.0])
        mobility.advance(1.2)
        assert mobility.active.tolist() == [False, True]

    def test_timestamps_must_increase(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text("0.0 a 0 0\n1.0 a 1 0\n1.0 a 2 0\n", encoding="utf-8")
        with pytest.raises(TraceFormatError) as exc:
            load_trace(path)
        assert exc.value.vehicle == "a"
        assert exc.value.line == 3

    def test_field_count(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text("0.0 a 0\n", encoding="utf-8")
        with pytest.raises(TraceFormatError) as exc:
            load_trace(path)
        assert exc.value.line == 1

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text("0.0 a 0 0\n0.5 a x 0\n", encoding="utf-8")
        with pytest.raises(TraceFormatError):
            load_trace(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(TraceFormatError):
            load_trace(tmp_path / "absent.txt")

    def test_build_from_config(self, tmp_path):
        path = tmp_path / "trace.txt"
        path.write_text(TRACE_TEXT, encoding="utf-8")
        config = load_config({"scenario": {"layout": "trace", "duration_s": 1.0}, "trace": {"path": str(path)}})
        mobility = build_mobility(config, np.random.default_rng(0), np.random.default_rng(1))
        assert isinstance(mobility, TraceMobility)
        assert mobility.n_vehicles == 2


class TestLayoutGenerators:
    """Test the per-layout entry points"""

    def test_highway(self):
        mobility = generate_highway(highway_config(), np.random.default_rng(0))
        assert isinstance(mobility, HighwayMobility)

    def test_manhattan(self):
        mobility = generate_manhattan(grid_config(), np.random.default_rng(0), np.random.default_rng(1))
        assert isinstance(mobility, ManhattanMobility)

    def test_layout_mismatch(self):
        with pytest.raises(ConfigError):
            generate_highway(grid_config(), np.random.default_rng(0))
        with pytest.raises(ConfigError):
            generate_manhattan(highway_config(), np.random.default_rng(0), np.random.default_rng(1))
