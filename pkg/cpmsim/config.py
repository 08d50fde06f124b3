"""Centralised configuration management"""

import hashlib
import json
import logging
import os
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .models import CpmSizeModel, GenerationPolicy, Layout, PolicyVariant

logger = logging.getLogger(__name__)

KMH_TO_MPS = 1000.0 / 3600.0


class SimulationError(Exception):
    """Base exception for simulator errors"""
    pass


class ConfigError(SimulationError):
    """Raised when a configuration document cannot be read or parsed"""
    pass


class ConfigValidationError(ConfigError):
    """Raised when a configuration violates a constraint"""

    def __init__(self, message: str, fields: Optional[List[str]] = None):
        super().__init__(message)
        self.fields = fields or []


class Settings:
    """Process-level settings read from the environment"""

    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    OUTPUT_DIR: str = os.getenv("CPMSIM_OUTPUT_DIR", "results")
    PARALLEL: str = os.getenv("CPMSIM_PARALLEL", "1")
    LOG_FILE: Optional[str] = os.getenv("CPMSIM_LOG_FILE")

    @classmethod
    def get_output_dir(cls) -> Path:
        return Path(os.getenv("CPMSIM_OUTPUT_DIR", cls.OUTPUT_DIR))

    @classmethod
    def get_parallel(cls) -> int:
        """Worker count for sweeps; invalid values fall back to 1"""
        raw = os.getenv("CPMSIM_PARALLEL", cls.PARALLEL)
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"Ignoring invalid CPMSIM_PARALLEL value: {raw!r}")
            return 1


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioSection(_Section):
    layout: Layout = Layout.HIGHWAY
    duration_s: float = Field(100.0, gt=0, description="Simulated time in seconds")
    seed: int = Field(0, ge=0, description="Master seed; every random stream derives from it")
    name: Optional[str] = Field(None, description="Label used in sweep tables")


class HighwaySection(_Section):
    length_m: float = Field(5000.0, gt=0)
    lanes: int = Field(6, ge=1)
    lane_width_m: float = Field(3.5, gt=0)
    speed_min_mps: float = Field(118.0 * KMH_TO_MPS, ge=0)
    speed_max_mps: float = Field(140.0 * KMH_TO_MPS, ge=0)
    lane_speed_ranges_mps: Optional[List[Tuple[float, float]]] = Field(
        None, description="Explicit (min, max) nominal speed range per lane"
    )
    speed_jitter: float = Field(0.05, ge=0, lt=1, description="Per-vehicle relative speed jitter")

    @model_validator(mode="after")
    def check_speed_ranges(self) -> "HighwaySection":
        if self.speed_max_mps < self.speed_min_mps:
            raise ValueError("speed_max_mps must be >= speed_min_mps")
        if self.lane_speed_ranges_mps is not None:
            if len(self.lane_speed_ranges_mps) != self.lanes:
                raise ValueError(
                    f"lane_speed_ranges_mps has {len(self.lane_speed_ranges_mps)} entries for {self.lanes} lanes"
                )
            for low, high in self.lane_speed_ranges_mps:
                if low < 0 or high < low:
                    raise ValueError(f"invalid lane speed range ({low}, {high})")
        return self


class ManhattanSection(_Section):
    blocks_x: int = Field(9, ge=1)
    blocks_y: int = Field(7, ge=1)
    block_width_m: float = Field(433.0, gt=0)
    block_height_m: float = Field(250.0, gt=0)
    lanes_per_street: int = Field(4, ge=2)
    lane_width_m: float = Field(3.5, gt=0)
    max_speed_mps: float = Field(70.0 * KMH_TO_MPS, gt=0)
    intersection_speed_mps: float = Field(30.0 * KMH_TO_MPS, gt=0)
    turn_probabilities: Tuple[float, float, float] = Field(
        (0.25, 0.5, 0.25), description="Probabilities of turning left, going straight, turning right"
    )
    speed_jitter: float = Field(0.05, ge=0, lt=1)

    @field_validator("turn_probabilities")
    @classmethod
    def check_turn_probabilities(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(p < 0 for p in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("turn probabilities must be non-negative and sum to 1")
        return value

    @model_validator(mode="after")
    def check_speeds(self) -> "ManhattanSection":
        if self.intersection_speed_mps > self.max_speed_mps:
            raise ValueError("intersection_speed_mps must not exceed max_speed_mps")
        return self

    @property
    def street_width_m(self) -> float:
        return self.lanes_per_street * self.lane_width_m


class TraceSection(_Section):
    path: Optional[str] = None


class TrafficSection(_Section):
    density_veh_per_km: float = Field(60.0, ge=0, description="Aggregate vehicles per km of road")
    vehicle_length_m: float = Field(5.0, gt=0)
    vehicle_width_m: float = Field(2.0, gt=0)
    headway_s: float = Field(1.5, gt=0)
    max_accel_mps2: float = Field(2.0, gt=0)
    max_decel_mps2: float = Field(4.5, gt=0)
    timestep_s: float = Field(0.1, gt=0)

    @model_validator(mode="after")
    def check_accel(self) -> "TrafficSection":
        if self.max_accel_mps2 > self.max_decel_mps2:
            raise ValueError("max_accel_mps2 must not exceed max_decel_mps2")
        return self


class SensingSection(_Section):
    range_m: float = Field(150.0, gt=0)
    fov_deg: float = 360.0
    position_noise_std_m: float = Field(0.0, ge=0)
    vehicle_occlusion: bool = False

    @field_validator("fov_deg")
    @classmethod
    def check_fov(cls, value: float) -> float:
        if value != 360.0:
            raise ValueError("only a 360 degree field of view is supported")
        return value


class CpmSection(_Section):
    t_gen_cpm_s: float = Field(0.1, ge=0.1, le=1.0)
    position_threshold_m: float = Field(4.0, gt=0)
    speed_threshold_mps: float = Field(0.5, gt=0)
    time_threshold_s: float = Field(1.0, gt=0)
    prediction_horizon_s: Optional[float] = Field(None, ge=0)
    fallback_interval_s: float = Field(1.0, gt=0)
    sic_interval_s: float = Field(1.0, gt=0)
    record_grace_s: float = Field(1.0, ge=0)
    max_objects: int = Field(128, ge=1)
    lower_layer_bytes: int = Field(80, ge=0)
    base_bytes: int = Field(121, ge=0)
    sic_bytes_per_sensor: int = Field(14, ge=0)
    sensors: int = Field(1, ge=1)
    object_bytes: int = Field(35, gt=0)


class WinnerB1Coefficients(_Section):
    los_near_slope: float = 22.7
    los_near_intercept: float = 27.0
    los_near_freq: float = 20.0
    los_far_slope: float = 40.0
    los_far_intercept: float = 7.56
    los_far_height: float = 17.3
    los_far_freq: float = 2.7
    nlos_offset: float = 17.9
    nlos_nj_scale: float = 12.5
    nlos_nj_max: float = 2.8
    nlos_nj_decay: float = 0.0024
    nlos_nj_min: float = 1.84
    nlos_freq: float = 3.0
    # Calibrated environment height: puts the ETSI highway-low PDR>=0.9 distance at 125-150 m
    effective_height_offset_m: float = Field(0.5, ge=0)


class RadioSection(_Section):
    tx_power_dbm: float = 23.0
    sensing_threshold_dbm: float = -85.0
    sensitivity_dbm: float = -85.0
    data_rate_bps: float = Field(6e6, gt=0)
    bandwidth_hz: float = Field(10e6, gt=0)
    carrier_hz: float = Field(5.9e9, gt=0)
    noise_figure_db: float = 9.0
    decode_threshold_db: float = 8.0
    antenna_height_m: float = Field(1.5, gt=0)
    shadowing_los_db: float = Field(3.0, ge=0)
    shadowing_nlos_db: float = Field(4.0, ge=0)
    max_range_m: float = Field(1000.0, gt=0, description="Receivers beyond this distance are not evaluated")
    path_loss_model: Literal["winner_b1"] = "winner_b1"
    winner_b1: WinnerB1Coefficients = WinnerB1Coefficients()

    @model_validator(mode="after")
    def check_antenna(self) -> "RadioSection":
        if self.antenna_height_m <= self.winner_b1.effective_height_offset_m:
            raise ValueError("antenna_height_m must exceed winner_b1.effective_height_offset_m")
        return self


class MacSection(_Section):
    aifs_s: float = Field(110e-6, ge=0)
    slot_s: float = Field(13e-6, gt=0)
    cw: int = Field(15, ge=0)
    preamble_s: float = Field(40e-6, ge=0)


class MetricsSection(_Section):
    bin_width_m: float = Field(25.0, gt=0)
    max_distance_m: float = Field(500.0, gt=0)
    warmup_s: float = Field(5.0, ge=0)
    cbr_window_s: float = Field(0.1, gt=0)
    pdr_level: float = Field(0.9, gt=0, le=1)


class StatisticsSection(_Section):
    highway_fraction: float = Field(0.4, gt=0, le=1, description="Central share of the highway length")
    manhattan_blocks_x: int = Field(3, ge=1)
    manhattan_blocks_y: int = Field(3, ge=1)
    x_min_m: Optional[float] = None
    x_max_m: Optional[float] = None
    y_min_m: Optional[float] = None
    y_max_m: Optional[float] = None


class OutputSection(_Section):
    cpm_log: bool = True
    frame_log: bool = True
    reception_log: bool = False
    busy_intervals: bool = False
    trajectories: bool = False


class ScenarioConfig(_Section):
    """Validated scenario description consumed by every module"""

    scenario: ScenarioSection = ScenarioSection()
    highway: HighwaySection = HighwaySection()
    manhattan: ManhattanSection = ManhattanSection()
    trace: TraceSection = TraceSection()
    traffic: TrafficSection = TrafficSection()
    sensing: SensingSection = SensingSection()
    cpm: CpmSection = CpmSection()
    radio: RadioSection = RadioSection()
    mac: MacSection = MacSection()
    metrics: MetricsSection = MetricsSection()
    statistics: StatisticsSection = StatisticsSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="before")
    @classmethod
    def convert_units(cls, data: Any) -> Any:
        if isinstance(data, Mapping):
            return _convert_kmh(data, ())
        return data

    @model_validator(mode="after")
    def check_layout(self) -> "ScenarioConfig":
        if self.scenario.layout == Layout.TRACE and not self.trace.path:
            raise ValueError("trace layout requires trace.path")
        if self.radio.max_range_m < self.metrics.max_distance_m:
            raise ValueError("radio.max_range_m must cover metrics.max_distance_m")
        return self

    @property
    def name(self) -> str:
        if self.scenario.name:
            return self.scenario.name
        density = f"{self.traffic.density_veh_per_km:g}"
        return f"{self.scenario.layout.value}-{density}vpkm"

    def policy(self, variant: Union[PolicyVariant, str] = PolicyVariant.ETSI) -> GenerationPolicy:
        """Generation policy for the given variant using this config's thresholds"""
        cpm = self.cpm
        return GenerationPolicy(
            variant=PolicyVariant(variant),
            position_threshold_m=cpm.position_threshold_m,
            speed_threshold_mps=cpm.speed_threshold_mps,
            time_threshold_s=cpm.time_threshold_s,
            t_gen_cpm_s=cpm.t_gen_cpm_s,
            prediction_horizon_s=cpm.prediction_horizon_s,
            fallback_interval_s=cpm.fallback_interval_s,
            sic_interval_s=cpm.sic_interval_s,
            record_grace_s=cpm.record_grace_s,
            max_objects=cpm.max_objects,
        )

    def size_model(self) -> CpmSizeModel:
        cpm = self.cpm
        return CpmSizeModel(
            lower_layer_bytes=cpm.lower_layer_bytes,
            base_bytes=cpm.base_bytes,
            sic_bytes_per_sensor=cpm.sic_bytes_per_sensor,
            sensors=cpm.sensors,
            object_bytes=cpm.object_bytes,
        )

    def config_hash(self) -> str:
        """Short content hash recorded in every output file"""
        document = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(document.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ScenarioConfig":
        """Copy with dotted-path overrides such as {"scenario.seed": 7}"""
        document = self.model_dump(mode="json")
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key or section not in document:
                raise ConfigError(f"Unknown override key: {dotted}")
            document[section][key] = value
        return _validate(document, "override")


def _convert_kmh(data: Mapping[str, Any], path: Tuple[str, ...]) -> Dict[str, Any]:
    """Rename every *_kmh key to *_mps, scaling its value once"""
    converted: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            converted[key] = _convert_kmh(value, path + (key,))
        elif isinstance(key, str) and key.endswith("_kmh"):
            target = key[: -len("_kmh")] + "_mps"
            if target in data:
                dotted = ".".join(path + (key,))
                raise ValueError(f"{dotted} conflicts with {target}")
            converted[target] = _scale(value, KMH_TO_MPS)
        else:
            converted[key] = value
    return converted


def _scale(value: Any, factor: float) -> Any:
    if isinstance(value, (list, tuple)):
        return [_scale(item, factor) for item in value]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return value * factor
    return value


def _deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _validate(document: Mapping[str, Any], origin: str) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(document)
    except ValidationError as e:
        fields = []
        problems = []
        for error in e.errors():
            dotted = ".".join(str(part) for part in error["loc"]) or "<root>"
            fields.append(dotted)
            problems.append(f"{dotted}: {error['msg']}")
        message = f"Invalid configuration ({origin}): " + "; ".join(problems)
        raise ConfigValidationError(message, fields) from e


def _is_file(path: Path) -> bool:
    try:
        return path.is_file()
    except (OSError, ValueError):
        return False


def _parse_toml(text: str, origin: str) -> Dict[str, Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        message = f"Cannot parse configuration ({origin}): {e}"
        match = re.search(r"line (\d+)", str(e))
        if match:
            lines = text.splitlines()
            number = int(match.group(1))
            if 1 <= number <= len(lines):
                message += f"\n  {number}: {lines[number - 1]}"
        raise ConfigError(message) from e


# Embedded defaults: 5 km six-lane highway at 60 veh/km, the model defaults above
DEFAULT_DOCUMENT: Dict[str, Any] = ScenarioConfig().model_dump(mode="json")


def load_config(source: Union[str, Path, Mapping[str, Any], None] = None) -> ScenarioConfig:
    """
    Load and validate a scenario configuration

    Args:
        source: path to a TOML file, TOML text, an already parsed mapping,
            or None for the embedded defaults

    Returns:
        ScenarioConfig: validated configuration

    Raises:
        ConfigError: unreadable or malformed document
        ConfigValidationError: a constraint is violated
    """
    if source is None:
        document: Mapping[str, Any] = {}
        origin = "defaults"
    elif isinstance(source, Mapping):
        document = source
        origin = "mapping"
    else:
        path = Path(source)
        # An existing file wins over inline text; a missing *.toml is still reported as a path
        looks_like_path = isinstance(source, Path) or (
            "\n" not in str(source) and (str(source).endswith(".toml") or _is_file(path))
        )
        if looks_like_path:
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"Cannot read configuration {path}: {e}") from e
            origin = str(path)
        else:
            text = str(source)
            origin = "inline"
        document = _parse_toml(text, origin)

    try:
        normalised = _convert_kmh(document, ())
    except ValueError as e:
        raise ConfigValidationError(f"Invalid configuration ({origin}): {e}") from e

    config = _validate(_deep_merge(DEFAULT_DOCUMENT, normalised), origin)
    logger.debug(f"Loaded configuration {config.name} from {origin} (hash {config.config_hash()})")
    return config
