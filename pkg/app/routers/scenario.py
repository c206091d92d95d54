"""
场景相关API路由
"""
import logging

from fastapi import APIRouter, HTTPException

from app.exceptions import SimulationError, UnknownPresetError
from app.models.result import (
    PresetInfo,
    PresetListResponse,
    RunResultData,
    RunScenarioRequest,
    RunScenarioResponse,
    TimeSeriesData,
)
from app.models.scenario import ScenarioOverrides
from app.services.presets import list_presets, load_preset_file
from app.services.runner import run_scenario_file

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/scenario", tags=["场景模拟"])


@router.get("/presets", response_model=PresetListResponse)
async def get_presets():
    """获取全部预设场景及其对应的实验图"""
    presets = [
        PresetInfo(name=f.name, figure=f.figure, description=f.description)
        for f in list_presets()
    ]
    return PresetListResponse(code=200, message="获取成功", data=presets)


@router.post("/run", response_model=RunScenarioResponse)
def run_scenario(request: RunScenarioRequest):
    """
    运行场景

    - **preset**: 预设名称（与 scenario 二选一）
    - **scenario**: 完整场景（与 preset 二选一）
    - **shots / seed / dtMaxUs / tauStepUs**: 可选覆盖
    """
    if (request.preset is None) == (request.scenario is None):
        raise HTTPException(status_code=400, detail="preset 与 scenario 必须且只能给出一个")
    try:
        scenario_file = load_preset_file(request.preset) if request.preset else request.scenario
        overrides = ScenarioOverrides(
            shots=request.shots,
            seed=request.seed,
            dt_max_us=request.dtMaxUs,
            tau_step_us=request.tauStepUs,
        )
        outcome = run_scenario_file(scenario_file, overrides)
        return RunScenarioResponse(
            code=200,
            message="运行成功",
            data=RunResultData(series=TimeSeriesData.from_series(outcome.series), manifest=outcome.manifest),
        )
    except UnknownPresetError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except SimulationError as e:
        logger.warning("场景运行失败: %s", e)
        raise HTTPException(status_code=400, detail=f"场景不合法: {str(e)}")
    except Exception as e:
        logger.exception("场景运行异常")
        raise HTTPException(status_code=500, detail=f"运行场景失败: {str(e)}")
