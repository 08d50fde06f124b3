from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

Position = Tuple[float, float]


class Layout(str, Enum):
    """Scenario geometry families"""
    HIGHWAY = "highway"
    MANHATTAN = "manhattan"
    TRACE = "trace"


class PolicyVariant(str, Enum):
    """CPM generation rule sets"""
    ETSI = "etsi"
    LOOK_AHEAD = "look_ahead"


class Outcome(str, Enum):
    """Fate of one frame at one receiver"""
    DECODED = "decoded"
    COLLISION_LOSS = "collision_loss"
    BELOW_SENSITIVITY = "below_sensitivity"


class VehicleState(BaseModel):
    """Kinematic state of one vehicle"""
    id: int = Field(ge=0, description="Vehicle identifier, unique within a scenario")
    position: Position = Field(description="Planar position in meters")
    speed: float = Field(ge=0, description="Speed in m/s")
    acceleration: float = Field(0.0, description="Acceleration along heading in m/s²")
    heading: float = Field(0.0, description="Heading in radians")
    lane: int = 0


class PerceivedObject(BaseModel):
    """One detected object as measured by an onboard sensor"""
    model_config = ConfigDict(frozen=True)

    object_id: int
    position: Position
    speed: float = Field(ge=0)
    acceleration: float = 0.0
    timestamp: float = Field(description="Measurement time in seconds")


class TrackedObjectRecord(BaseModel):
    """Reference values from the last CPM inclusion of one object"""
    object_id: int
    position: Optional[Position] = Field(None, description="Position at last inclusion")
    speed: float = Field(0.0, description="Speed at last inclusion")
    included_at: Optional[float] = Field(None, description="Time of last inclusion")
    ever_included: bool = False
    last_seen: float = Field(description="Time the object was last detected")


class GenerationPolicy(BaseModel):
    """Thresholds and variant of the CPM generation rules"""
    variant: PolicyVariant = PolicyVariant.ETSI
    position_threshold_m: float = Field(4.0, gt=0)
    speed_threshold_mps: float = Field(0.5, gt=0)
    time_threshold_s: float = Field(1.0, gt=0)
    t_gen_cpm_s: float = Field(0.1, ge=0.1, le=1.0)
    prediction_horizon_s: Optional[float] = Field(
        None, ge=0, description="Look-ahead horizon; None means one generation period"
    )
    fallback_interval_s: float = Field(1.0, gt=0)
    sic_interval_s: float = Field(1.0, gt=0)
    record_grace_s: float = Field(1.0, ge=0)
    max_objects: int = Field(128, ge=1)

    @property
    def horizon_s(self) -> float:
        if self.prediction_horizon_s is None:
            return self.t_gen_cpm_s
        return self.prediction_horizon_s


class CpmSizeModel(BaseModel):
    """Byte accounting for generated CPMs"""
    lower_layer_bytes: int = 80
    base_bytes: int = 121
    sic_bytes_per_sensor: int = 14
    sensors: int = 1
    object_bytes: int = 35

    def header_bytes(self, has_sic: bool) -> int:
        sic = self.sic_bytes_per_sensor * self.sensors if has_sic else 0
        return self.lower_layer_bytes + self.base_bytes + sic

    def size(self, object_count: int, has_sic: bool) -> int:
        return self.header_bytes(has_sic) + self.object_bytes * object_count


class Cpm(BaseModel):
    """One generated collective perception message

    Management and station data containers are always present; the sensor
    information container only when has_sic is set.
    """
    sender_id: int
    sender_position: Position
    generation_time: float
    has_sic: bool
    objects: List[PerceivedObject] = []
    size_bytes: int = Field(gt=0)
    header_bytes: int = Field(gt=0)
    policy: PolicyVariant = PolicyVariant.ETSI

    @property
    def object_ids(self) -> List[int]:
        return [obj.object_id for obj in self.objects]

    @property
    def object_count(self) -> int:
        return len(self.objects)

    @property
    def containers(self) -> List[str]:
        names = ["management", "station_data"]
        if self.has_sic:
            names.append("sensor_information")
        if self.objects:
            names.append("perceived_objects")
        return names


class FrameEvent(BaseModel):
    """One on-air transmission of a CPM"""
    frame_id: int
    sender_id: int
    sender_position: Position
    tx_power_dbm: float
    start_time: float
    airtime: float = Field(gt=0)
    size_bytes: int = Field(gt=0)
    payload: Cpm
    sender_in_region: bool = False

    @property
    def end_time(self) -> float:
        return self.start_time + self.airtime


class ReceptionOutcome(BaseModel):
    """Reception decision for one frame at one receiver"""
    receiver_id: int
    frame_id: int
    sender_id: int
    outcome: Outcome
    rx_power_dbm: float
    sinr_db: float
    distance_m: float
    los: bool = True
    tx_time: float = 0.0
    time: float = Field(0.0, description="Frame end time when the decision is taken")

    @property
    def decoded(self) -> bool:
        return self.outcome == Outcome.DECODED
