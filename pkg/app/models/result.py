"""
运行结果与 API 数据模型
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.models.scenario import ScenarioFile
from app.services.experiment import TimeSeries


class RunManifest(BaseModel):
    """运行清单：与 CSV 一起写出的 JSON 旁注文件"""
    scenario: str = Field(..., description="场景名称")
    scenarioHash: str = Field(..., description="场景内容 sha256")
    parameters: Dict[str, Any] = Field(..., description="全部物理参数（SI 单位）")
    seed: int = Field(..., description="随机种子")
    shots: int = Field(..., description="测量次数，0 为精确模式")
    integrator: Dict[str, Any] = Field(..., description="积分器设置")
    wallTimeS: float = Field(..., description="墙钟耗时（秒）")
    output: Optional[str] = Field(None, description="CSV 输出路径")

    def reproduction_key(self) -> Dict[str, Any]:
        """决定 CSV 内容的字段；键相同则 CSV 逐字节相同（与线程数无关）"""
        return {
            "scenarioHash": self.scenarioHash,
            "seed": self.seed,
            "shots": self.shots,
            "dtMaxS": self.integrator.get("dtMaxS"),
        }


class TimeSeriesData(BaseModel):
    """时间序列（JSON 形式）"""
    tauUs: List[float] = Field(..., description="τ 网格（µs）")
    columns: Dict[str, List[float]] = Field(..., description="各可观测量的概率 / 频率")
    shots: int = Field(0, description="测量次数")
    shotCounts: Optional[Dict[str, List[int]]] = Field(None, description="每点计数")

    @classmethod
    def from_series(cls, series: TimeSeries) -> "TimeSeriesData":
        return cls(
            tauUs=[round(t * 1e6, 9) for t in series.times.tolist()],
            columns={label: values.tolist() for label, values in series.columns.items()},
            shots=series.shots,
            shotCounts=None if series.shot_counts is None
            else {label: counts.tolist() for label, counts in series.shot_counts.items()},
        )


class RunScenarioRequest(BaseModel):
    """运行场景请求：preset 与 scenario 二选一"""
    preset: Optional[str] = Field(None, description="预设名称，如 fig2a")
    scenario: Optional[ScenarioFile] = Field(None, description="完整场景")
    shots: Optional[int] = Field(None, ge=0, description="覆盖测量次数")
    seed: Optional[int] = Field(None, ge=0, description="覆盖随机种子")
    dtMaxUs: Optional[float] = Field(None, gt=0, description="覆盖 RK4 最大步长（µs）")
    tauStepUs: Optional[float] = Field(None, gt=0, description="覆盖 τ 步长（µs）")

    class Config:
        json_schema_extra = {
            "example": {
                "preset": "fig2b",
                "shots": 0,
                "tauStepUs": 12.5
            }
        }


class RunResultData(BaseModel):
    """运行结果"""
    series: TimeSeriesData
    manifest: RunManifest


class RunScenarioResponse(BaseModel):
    """运行场景响应"""
    code: int = Field(..., description="状态码，200表示成功")
    message: str = Field(..., description="消息")
    data: Optional[RunResultData] = Field(None, description="运行结果")


class PresetInfo(BaseModel):
    """预设摘要"""
    name: str = Field(..., description="预设名称")
    figure: str = Field(..., description="对应的实验图")
    description: str = Field(..., description="一行说明")


class PresetListResponse(BaseModel):
    """预设列表响应"""
    code: int = Field(..., description="状态码，200表示成功")
    message: str = Field(..., description="消息")
    data: List[PresetInfo] = Field(default_factory=list, description="预设列表")
