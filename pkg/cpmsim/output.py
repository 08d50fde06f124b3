"""CSV writers for run and sweep results"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Tuple, Union

import pandas as pd

from .metrics import CpmStats
from .scheduler import SimulationResult, SweepResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"


def write_csv(path: Path, frame: pd.DataFrame, header: str) -> Path:
    """Write `frame` after a reproducibility comment line; UTF-8, LF line endings"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# {header}\n")
        frame.to_csv(handle, index=False, lineterminator="\n", float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {path} ({len(frame)} rows)")
    return path


def histogram_frame(histogram: Mapping, key: str) -> pd.DataFrame:
    total = sum(histogram.values())
    rows = [(value, count, count / total if total else 0.0) for value, count in sorted(histogram.items())]
    return pd.DataFrame(rows, columns=[key, "count", "probability"])


def curve_frame(curves: Mapping[str, Mapping[float, Tuple[float, int]]], class_column: str,
                value_column: str, count_column: str) -> pd.DataFrame:
    rows = [
        (name, distance, value, count)
        for name, curve in curves.items()
        for distance, (value, count) in sorted(curve.items())
    ]
    return pd.DataFrame(rows, columns=[class_column, "distance_m", value_column, count_column])


def cpm_stats_frame(stats: CpmStats) -> pd.DataFrame:
    rows = [
        ("cpm_count", stats.cpm_count),
        ("rate_hz", stats.rate_hz),
        ("objects_per_cpm", stats.objects_per_cpm),
        ("overhead_fraction", stats.overhead_fraction),
        ("object_reports_per_s", stats.object_reports_per_s),
    ]
    return pd.DataFrame(rows, columns=["metric", "value"])


def run_frames(result: SimulationResult) -> Dict[str, pd.DataFrame]:
    """Every per-run table keyed by file name"""
    metrics = result.metrics
    stats = metrics.cpm_statistics()
    summary = result.summary().model_dump(mode="json")
    summary_columns = [
        "policy", "seed", "cpm_rate_hz", "objects_per_cpm", "cbr", "pdr_distance_m",
        "overhead_fraction", "object_reports_per_s", "cpm_count", "frames", "duration_s",
    ]
    update_rows = [(d, mean, count) for d, (mean, count) in sorted(metrics.update_intervals().items())]

    frames = {
        "summary.csv": pd.DataFrame([summary], columns=summary_columns),
        "cpm_stats.csv": cpm_stats_frame(stats),
        "objects_per_cpm.csv": histogram_frame(stats.objects_histogram, "objects"),
        "detected_objects.csv": histogram_frame(stats.detected_histogram, "objects"),
        "cpm_intervals.csv": histogram_frame(stats.interval_histogram, "interval_s"),
        "cbr.csv": pd.DataFrame(list(metrics.cbr_series().items()), columns=["window_start_s", "cbr"]),
        "pdr.csv": curve_frame(metrics.pdr_curves(), "link_class", "pdr", "transmitters"),
        "opr.csv": curve_frame(metrics.opr_curves(), "relation", "opr", "pairs"),
        "update_interval.csv": pd.DataFrame(update_rows, columns=["distance_m", "mean_interval_s", "samples"]),
    }

    output = result.config.output
    if output.cpm_log:
        frames["cpm_log.csv"] = pd.DataFrame(
            [
                (e.time, e.sender, e.object_count, ";".join(str(i) for i in e.object_ids),
                 e.size_bytes, int(e.sic), e.policy)
                for e in result.cpm_log
            ],
            columns=["time_s", "sender", "objects", "object_ids", "size_bytes", "sic", "policy"],
        )
    if output.frame_log:
        frames["frame_log.csv"] = pd.DataFrame(
            result.frame_log, columns=["frame_id", "sender", "start_s", "airtime_s", "size_bytes"]
        )
    if output.reception_log:
        frames["reception_log.csv"] = pd.DataFrame(
            [
                (r.frame_id, r.receiver_id, r.outcome.value, r.distance_m, int(r.los), r.rx_power_dbm, r.sinr_db)
                for r in result.reception_log
            ],
            columns=["frame_id", "receiver", "outcome", "distance_m", "los", "rx_power_dbm", "sinr_db"],
        )
    return frames


def write_run(result: SimulationResult, out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    header = f"config_hash={result.config.config_hash()} seed={result.seed}"
    written = [write_csv(out_dir / name, frame, header) for name, frame in run_frames(result).items()]
    logger.info(f"Wrote {len(written)} files to {out_dir}")
    return written


def write_sweep(result: SweepResult, out_dir: Union[str, Path], config_hashes: Iterable[str],
                seeds: Iterable[int]) -> List[Path]:
    out_dir = Path(out_dir)
    header = (
        f"config_hash={';'.join(config_hashes)} "
        f"seed={';'.join(str(s) for s in seeds)}"
    )
    written = [
        write_csv(out_dir / "sweep.csv", result.table, header),
        write_csv(out_dir / "comparison.csv", result.comparison, header),
    ]
    logger.info(f"Wrote sweep tables to {out_dir}")
    return written
