"""
预设场景服务
app/presets/ 下每个 JSON 文件是一个场景，与实验图一一对应
"""
import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple

from app.exceptions import UnknownPresetError
from app.models.scenario import ScenarioFile, ScenarioOverrides
from app.services.dynamics import DEFAULT_DT_MAX
from app.services.experiment import Scenario

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent.parent / "presets"
PRESET_NAMES: Tuple[str, ...] = ("fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig5b", "fig6b")


@lru_cache(maxsize=None)
def load_preset_file(name: str) -> ScenarioFile:
    """
    读取预设的场景文件

    Raises:
        UnknownPresetError: 名称不在预设列表中
    """
    if name not in PRESET_NAMES:
        raise UnknownPresetError(f"未知的预设: {name}（可用: {', '.join(PRESET_NAMES)}）")
    path = PRESET_DIR / f"{name}.json"
    with path.open(encoding="utf-8") as f:
        return ScenarioFile.model_validate(json.load(f))


def preset(
    name: str,
    overrides: Optional[ScenarioOverrides] = None,
    default_dt_max: float = DEFAULT_DT_MAX,
) -> Scenario:
    """按名称构造完整参数化的 Scenario"""
    scenario = load_preset_file(name).with_overrides(overrides).to_scenario(default_dt_max)
    logger.debug("加载预设 %s（%s）", name, scenario.figure)
    return scenario


def list_presets() -> List[ScenarioFile]:
    return [load_preset_file(name) for name in PRESET_NAMES]
