#!/usr/bin/env python3
"""
Tests for the CPM generation rules: triggers, look-ahead, fallback and assembly
"""

import logging
import os
import sys

import pytest

# Add parent directory to path for imports
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

from cpmsim.cpm_engine import (
    CpmGenerator,
    assemble_cpm,
    check_etsi_triggers,
    fallback_timer,
    look_ahead_extension,
    object_deltas,
)
from cpmsim.geometry import HighwayRoad, ManhattanGrid
from cpmsim.models import (
    CpmSizeModel,
    GenerationPolicy,
    PerceivedObject,
    PolicyVariant,
    TrackedObjectRecord,
    VehicleState,
)
from cpmsim.scenarios import format_schedule, replay, toy_scenario

try:
    from cpm_test_cases import LOOK_AHEAD_CASES, SCENARIO_SCHEDULES, SIZE_CASES, TRIGGER_CASES, get_case_by_name
except ImportError:
    from tests.cpm_test_cases import LOOK_AHEAD_CASES, SCENARIO_SCHEDULES, SIZE_CASES, TRIGGER_CASES, get_case_by_name


ETSI = GenerationPolicy()
LOOK_AHEAD = GenerationPolicy(variant=PolicyVariant.LOOK_AHEAD)
SENDER = VehicleState(id=0, position=(0.0, 0.0), speed=0.0)


def record_from_case(case, object_id=1):
    ref = case["record"]
    return TrackedObjectRecord(
        object_id=object_id,
        position=ref["position"],
        speed=ref["speed"],
        included_at=ref["included_at"],
        ever_included=True,
        last_seen=case["now"],
    )


def detection_from_case(case, object_id=1):
    det = case["detection"]
    return PerceivedObject(
        object_id=object_id,
        position=det["position"],
        speed=det["speed"],
        acceleration=det.get("acceleration", 0.0),
        timestamp=case["now"],
    )


def stationary(object_id, x=20.0, now=0.0):
    return PerceivedObject(object_id=object_id, position=(x, 3.5 * object_id), speed=0.0, timestamp=now)


@pytest.mark.parametrize("case", TRIGGER_CASES, ids=[c["name"] for c in TRIGGER_CASES])
def test_etsi_trigger_cases(case):
    records = {1: record_from_case(case)}
    triggered, include = check_etsi_triggers(records, [detection_from_case(case)], case["now"], ETSI)
    assert triggered == case["included"], case["notes"]
    assert include == ([1] if case["included"] else [])


@pytest.mark.parametrize("case", LOOK_AHEAD_CASES, ids=[c["name"] for c in LOOK_AHEAD_CASES])
def test_look_ahead_cases(case):
    records = {1: record_from_case(case)}
    extra = look_ahead_extension(records, [detection_from_case(case)], case["now"], LOOK_AHEAD, [])
    assert (extra == [1]) == case["anticipated"], case["notes"]


def test_object_deltas():
    case = get_case_by_name(TRIGGER_CASES, "speed changed by 0.6 m/s")
    dp, ds, dt = object_deltas(record_from_case(case), detection_from_case(case), case["now"])
    assert dp == pytest.approx(1.0)
    assert ds == pytest.approx(0.6)
    assert dt == pytest.approx(0.1)


def test_new_objects_always_included():
    never_included = TrackedObjectRecord(object_id=2, last_seen=0.0)
    detections = [stationary(1), stationary(2)]
    triggered, include = check_etsi_triggers({2: never_included}, detections, 0.0, ETSI)
    assert triggered
    assert include == [1, 2]


def test_look_ahead_skips_already_included_and_takes_new():
    case = get_case_by_name(LOOK_AHEAD_CASES, "3.5 m travelled at 70 km/h")
    records = {1: record_from_case(case)}
    detections = [detection_from_case(case), stationary(5, now=case["now"])]
    assert look_ahead_extension(records, detections, case["now"], LOOK_AHEAD, [1]) == [5]


def test_look_ahead_horizon_zero_adds_nothing_beyond_etsi():
    policy = GenerationPolicy(variant=PolicyVariant.LOOK_AHEAD, prediction_horizon_s=0.0)
    case = get_case_by_name(LOOK_AHEAD_CASES, "3.5 m travelled at 70 km/h")
    records = {1: record_from_case(case)}
    assert look_ahead_extension(records, [detection_from_case(case)], case["now"], policy, []) == []


class TestFallbackTimer:
    """Test the one second fallback"""

    def test_no_previous_cpm(self):
        assert fallback_timer(None, 0.0)

    def test_one_second_elapsed(self):
        assert fallback_timer(2.0, 3.0)

    def test_not_yet(self):
        assert not fallback_timer(2.0, 2.9)

    def test_accumulated_float_error(self):
        # ten additions of 0.1 fall just short of 1.0
        now = 0.0
        for _ in range(10):
            now += 0.1
        assert fallback_timer(0.0, now)


class TestAssembly:
    """Test CPM assembly and size accounting"""

    @pytest.mark.parametrize("case", SIZE_CASES)
    def test_sizes(self, case):
        objects = [stationary(i) for i in range(case["objects"])]
        cpm = assemble_cpm(SENDER, objects, 0.0, case["sic"])
        assert cpm.size_bytes == case["size"]
        assert cpm.object_count == case["objects"]

    def test_fallback_cpm_containers(self):
        cpm = assemble_cpm(SENDER, [], 1.0, True)
        assert cpm.containers == ["management", "station_data", "sensor_information"]
        assert cpm.header_bytes == 215

    def test_custom_size_model(self):
        model = CpmSizeModel(object_bytes=50, sensors=2)
        cpm = assemble_cpm(SENDER, [stationary(1)], 0.0, True, size_model=model)
        assert cpm.size_bytes == 80 + 121 + 28 + 50

    def test_cap_keeps_stalest(self, caplog):
        objects = [stationary(i) for i in range(5)]
        staleness = {0: 0.1, 1: 0.9, 2: float("inf"), 3: 0.5, 4: 0.2}
        with caplog.at_level(logging.WARNING):
            cpm = assemble_cpm(SENDER, objects, 0.0, False, staleness=staleness, max_objects=3)
        assert cpm.object_ids == [1, 2, 3]
        assert "deferred" in caplog.text


class TestCpmGenerator:
    """Test the per-vehicle state machine"""

    def test_isolated_vehicle_sends_one_cpm_per_second(self):
        generator = CpmGenerator(0, ETSI)
        times = []
        for k in range(50):
            now = 0.05 + k * 0.1
            cpm = generator.check(now, [], SENDER)
            if cpm is not None:
                times.append(now)
                assert cpm.object_count == 0
        assert len(times) == 5
        assert times[1] - times[0] == pytest.approx(1.0)

    def test_sic_once_per_second(self):
        generator = CpmGenerator(0, ETSI)
        sics = []
        for k in range(20):
            now = k * 0.1
            # a new object every check keeps CPMs flowing
            cpm = generator.check(now, [stationary(i, now=now) for i in range(k + 1)], SENDER)
            sics.append(cpm.has_sic)
        assert sics.count(True) == 2
        assert sics[0] and sics[10]

    def test_records_expire_after_grace(self):
        generator = CpmGenerator(0, ETSI, keep_history=True)
        generator.check(0.0, [stationary(1)], SENDER)
        generator.check(0.5, [], SENDER)
        assert 1 in generator.records
        generator.check(1.2, [], SENDER)
        assert 1 not in generator.records
        cpm = generator.check(1.3, [stationary(1, now=1.3)], SENDER)
        assert cpm is not None and cpm.object_ids == [1]
        assert generator.history[1] == [0.0, 1.3]

    def test_included_objects_carry_current_measurements(self):
        generator = CpmGenerator(0, LOOK_AHEAD)
        moving = PerceivedObject(object_id=1, position=(0.0, 0.0), speed=19.44, timestamp=0.0)
        generator.check(0.0, [moving], SENDER)
        moved = PerceivedObject(object_id=1, position=(3.5, 0.0), speed=19.44, timestamp=0.2)
        cpm = generator.check(0.2, [moved, stationary(2, now=0.2)], SENDER)
        assert cpm.object_ids == [1, 2]
        assert cpm.objects[0].position == (3.5, 0.0)
        assert generator.records[1].position == (3.5, 0.0)
        assert generator.records[1].included_at == 0.2

    def test_deferred_objects_follow_in_next_cpm(self):
        policy = GenerationPolicy(max_objects=128)
        generator = CpmGenerator(0, policy)
        objects = [stationary(i) for i in range(130)]
        first = generator.check(0.0, objects, SENDER)
        assert first.object_count == 128
        second = generator.check(0.1, [obj.model_copy(update={"timestamp": 0.1}) for obj in objects], SENDER)
        assert second.object_ids == [128, 129]


class TestWrappedLayouts:
    """Test that displacements across the ring or torus seam stay short"""

    RING = HighwayRoad(1000.0, 21.0)
    GRID = ManhattanGrid(3, 3, 200.0, 100.0, 10.0)

    @staticmethod
    def included_at(position, speed, now=0.0):
        return TrackedObjectRecord(
            object_id=1, position=position, speed=speed, included_at=now, ever_included=True, last_seen=now
        )

    def test_ring_seam_delta(self):
        record = self.included_at((999.0, 3.5), 20.0)
        detection = PerceivedObject(object_id=1, position=(1.0, 3.5), speed=20.0, timestamp=0.1)
        dp, _, _ = object_deltas(record, detection, 0.1, self.RING)
        assert dp == pytest.approx(2.0)

    def test_ring_seam_crossing_does_not_trigger(self):
        records = {1: self.included_at((999.0, 3.5), 20.0)}
        detection = PerceivedObject(object_id=1, position=(1.0, 3.5), speed=20.0, timestamp=0.1)
        assert check_etsi_triggers(records, [detection], 0.1, ETSI, self.RING) == (False, [])
        # without the layout the raw coordinates are 998 m apart
        assert check_etsi_triggers(records, [detection], 0.1, ETSI) == (True, [1])

    def test_grid_seam_crossing_not_anticipated(self):
        records = {1: self.included_at((0.0, 324.0), 10.0)}
        detection = PerceivedObject(object_id=1, position=(0.0, -4.0), speed=10.0, timestamp=0.1)
        assert look_ahead_extension(records, [detection], 0.1, LOOK_AHEAD, [], self.GRID) == []

    def test_generator_uses_its_layout(self):
        generator = CpmGenerator(0, ETSI, layout=self.RING)
        generator.check(0.0, [PerceivedObject(object_id=1, position=(999.0, 3.5), speed=20.0, timestamp=0.0)], SENDER)
        crossed = PerceivedObject(object_id=1, position=(1.0, 3.5), speed=20.0, timestamp=0.1)
        assert generator.check(0.1, [crossed], SENDER) is None


class TestScriptedScenarios:
    """Test the scripted toy scenarios end to end"""

    @pytest.mark.parametrize("key", sorted(SCENARIO_SCHEDULES))
    def test_schedules(self, key):
        number, variant = key
        policy = GenerationPolicy(variant=PolicyVariant(variant))
        cpms = replay(toy_scenario(number), policy)
        schedule = [(round(cpm.generation_time, 1), cpm.object_count) for cpm in cpms]
        assert schedule == SCENARIO_SCHEDULES[key]

    def test_scenario_one_same_under_both_policies(self):
        etsi = replay(toy_scenario(1), ETSI)
        look_ahead = replay(toy_scenario(1), LOOK_AHEAD)
        assert [c.generation_time for c in etsi] == [c.generation_time for c in look_ahead]

    def test_look_ahead_consolidates_scenario_two(self):
        etsi = replay(toy_scenario(2), ETSI)
        look_ahead = replay(toy_scenario(2), LOOK_AHEAD)
        assert len(look_ahead) < len(etsi)
        mean = lambda cpms: sum(c.object_count for c in cpms) / len(cpms)
        assert mean(look_ahead) > mean(etsi)

    def test_scenario_one_sizes(self):
        sizes = [cpm.size_bytes for cpm in replay(toy_scenario(1), ETSI)]
        assert sizes == [425, 411, 411, 411]

    def test_format_schedule(self):
        text = format_schedule(replay(toy_scenario(2), ETSI), PolicyVariant.ETSI)
        assert text.splitlines()[0] == "etsi: 10 CPMs"
        assert "t=0.1s objects=2 [2,3]" in text

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            toy_scenario(3)
