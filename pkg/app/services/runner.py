"""
场景运行编排
解析场景来源（预设名称或 JSON 文件）→ 应用覆盖 → 运行 → 生成运行清单；命令行与 API 共用
"""
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config import Settings, get_settings
from app.exceptions import ScenarioParseError
from app.models.result import RunManifest
from app.models.scenario import US, ScenarioFile, ScenarioOverrides
from app.services.dynamics import TRACE_DRIFT_LIMIT
from app.services.experiment import ExperimentService, Scenario, TimeSeries
from app.services.presets import PRESET_NAMES, load_preset_file

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunOutcome:
    scenario: Scenario
    series: TimeSeries
    manifest: RunManifest


def validation_diagnostics(error: ValidationError) -> List[str]:
    """pydantic 错误 → “字段路径: 说明” 列表"""
    return [
        f"{'.'.join(str(part) for part in item['loc']) or '<root>'}: {item['msg']}"
        for item in error.errors()
    ]


def read_json_document(path: Path) -> Dict[str, Any]:
    """
    Raises:
        ScenarioParseError: 文件不存在或 JSON 语法错误（附行号、列号）
    """
    if not path.is_file():
        raise ScenarioParseError(str(path), ["文件不存在"])
    try:
        with path.open(encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(str(path), [f"第 {e.lineno} 行第 {e.colno} 列: {e.msg}"]) from e
    if not isinstance(document, dict):
        raise ScenarioParseError(str(path), ["顶层必须是 JSON 对象"])
    return document


def load_scenario_source(source: str, overlay: Optional[str] = None) -> ScenarioFile:
    """
    source 为预设名称或场景文件路径；overlay 为可选的覆盖文件路径

    Raises:
        ScenarioParseError: 文件无法解析或字段不合法
    """
    if source in PRESET_NAMES:
        scenario_file = load_preset_file(source)
    else:
        path = Path(source)
        try:
            scenario_file = ScenarioFile.model_validate(read_json_document(path))
        except ValidationError as e:
            raise ScenarioParseError(str(path), validation_diagnostics(e)) from e

    if overlay is not None:
        overlay_path = Path(overlay)
        try:
            scenario_file = scenario_file.with_overlay(read_json_document(overlay_path))
        except ValidationError as e:
            raise ScenarioParseError(str(overlay_path), validation_diagnostics(e)) from e
    return scenario_file


def run_scenario_file(
    scenario_file: ScenarioFile,
    overrides: Optional[ScenarioOverrides] = None,
    settings: Optional[Settings] = None,
    output: Optional[Path] = None,
) -> RunOutcome:
    """
    Raises:
        ScenarioValidationError / ScheduleConflictError / FockCutoffError 等 SimulationError
    """
    settings = settings or get_settings()
    resolved = scenario_file.with_overrides(overrides)
    scenario = resolved.to_scenario(settings.dt_max_us * US)
    service = ExperimentService(workers=settings.workers)

    started = time.perf_counter()
    series = service.run_scenario(scenario)
    wall_time = time.perf_counter() - started

    manifest = RunManifest(
        scenario=resolved.name,
        scenarioHash=resolved.digest(),
        parameters=resolved.parameter_echo(scenario.dt_max),
        seed=scenario.seed,
        shots=scenario.shots,
        integrator={
            "method": "rk4",
            "dtMaxS": scenario.dt_max,
            "traceDriftLimit": TRACE_DRIFT_LIMIT,
            "workers": service.workers,
        },
        wallTimeS=round(wall_time, 3),
        output=None if output is None else str(output),
    )
    return RunOutcome(scenario=scenario, series=series, manifest=manifest)
