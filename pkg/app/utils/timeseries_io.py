"""
时间序列 CSV 与运行清单的读写
CSV 表头: tau_us,<各可观测量>,shots；数值保留 6 位小数，按 τ 升序逐行写出
"""
import json
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from app.models.result import RunManifest
from app.services.experiment import TimeSeries

CSV_FLOAT_FORMAT = "%.6f"
TAU_COLUMN = "tau_us"
SHOTS_COLUMN = "shots"

PathLike = Union[str, Path]


def timeseries_frame(series: TimeSeries) -> pd.DataFrame:
    frame = pd.DataFrame({TAU_COLUMN: series.times * 1e6})
    for label, values in series.columns.items():
        frame[label] = values
    frame[SHOTS_COLUMN] = np.full(len(series.times), series.shots, dtype=int)
    return frame


def write_timeseries_csv(series: TimeSeries, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    timeseries_frame(series).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def read_timeseries_csv(path: PathLike) -> TimeSeries:
    """读回 CSV；shots > 0 时由频率恢复整数计数"""
    frame = pd.read_csv(path)
    if TAU_COLUMN not in frame.columns or SHOTS_COLUMN not in frame.columns:
        raise ValueError(f"{path}: CSV 缺少 {TAU_COLUMN} 或 {SHOTS_COLUMN} 列")
    labels = [c for c in frame.columns if c not in (TAU_COLUMN, SHOTS_COLUMN)]
    shots = int(frame[SHOTS_COLUMN].iloc[0]) if len(frame) else 0
    columns = {label: frame[label].to_numpy(dtype=float) for label in labels}
    shot_counts = None
    if shots > 0:
        shot_counts = {label: np.rint(values * shots).astype(int) for label, values in columns.items()}
    return TimeSeries(
        times=frame[TAU_COLUMN].to_numpy(dtype=float) * 1e-6,
        columns=columns,
        shots=shots,
        shot_counts=shot_counts,
    )


def manifest_path(csv_path: PathLike) -> Path:
    """out.csv → out.manifest.json"""
    csv_path = Path(csv_path)
    return csv_path.with_name(f"{csv_path.stem}.manifest.json")


def write_manifest(manifest: RunManifest, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(manifest.model_dump(mode="json"), f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_manifest(path: PathLike) -> RunManifest:
    with Path(path).open(encoding="utf-8") as f:
        return RunManifest.model_validate(json.load(f))
