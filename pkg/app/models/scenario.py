"""
场景文件数据模型
文件中的单位沿用实验习惯：频率为 ν = ω/2π（kHz），时间为 µs，脉冲面积以 π 为单位，离子编号从 0 开始
to_scenario() 统一换算为内部的 rad/s 与秒
"""
import hashlib
import json
import math
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.exceptions import ScenarioValidationError
from app.services.dynamics import DEFAULT_DT_MAX, NoiseModel
from app.services.experiment import DEFAULT_CUTOFF_TOLERANCE, Observable, Scenario
from app.services.hamiltonian import HoppingGraph
from app.services.operators import SPIN_DOWN, SPIN_UP, HilbertLayout
from app.services.schedule import PulseEvent, TimedPulse

# ν[kHz] → ω[rad/s]
KHZ = 2.0 * math.pi * 1e3
# µs → s
US = 1e-6
# 网格点比较容差（µs）
GRID_EPS_US = 1e-9


def khz_to_angular(nu_khz: float) -> float:
    return nu_khz * KHZ


def angular_to_khz(omega: float) -> float:
    return omega / KHZ


class PulseSpec(BaseModel):
    """单个脉冲（制备 / 映射）"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["carrier", "bsb", "rsb", "dispersive", "phase_shift", "wait"] = Field(..., description="脉冲类型")
    ion: int = Field(0, ge=0, description="离子编号（从 0 开始）")
    area_pi: Optional[float] = Field(None, description="脉冲面积（以 π 为单位），与 duration_us 二选一")
    duration_us: Optional[float] = Field(None, ge=0, description="脉冲时长（µs）")
    phase_pi: float = Field(0.0, description="激光相位 φ（以 π 为单位）")
    rabi_khz: Optional[float] = Field(None, gt=0, description="参考跃迁的拉比频率 2g/2π（kHz）")
    detuning_khz: float = Field(0.0, description="失谐 Δ/2π（kHz）")
    chi_khz: Optional[float] = Field(None, description="色散耦合 χ/2π（kHz）")
    instantaneous: bool = Field(False, description="是否作为瞬时操作")

    def to_event(self) -> PulseEvent:
        return PulseEvent(
            kind=self.kind,
            ion=self.ion,
            area=None if self.area_pi is None else self.area_pi * math.pi,
            duration=None if self.duration_us is None else self.duration_us * US,
            phase=self.phase_pi * math.pi,
            rabi=None if self.rabi_khz is None else khz_to_angular(self.rabi_khz),
            detuning=khz_to_angular(self.detuning_khz),
            chi=None if self.chi_khz is None else khz_to_angular(self.chi_khz),
            instantaneous=self.instantaneous,
        )


class TimedPulseSpec(PulseSpec):
    """跳跃时段内的 DD 脉冲"""
    time_us: float = Field(..., ge=0, description="脉冲起始时刻（µs，从制备结束起算）")

    def to_timed(self) -> TimedPulse:
        return TimedPulse(time=self.time_us * US, event=self.to_event())


class HoppingSpec(BaseModel):
    """一对离子之间的跳跃速率"""
    model_config = ConfigDict(extra="forbid")

    ions: Tuple[int, int] = Field(..., description="离子对")
    kappa_khz: float = Field(..., ge=0, description="跳跃速率 κ/2π（kHz）")


class NoiseSpec(BaseModel):
    """噪声参数"""
    model_config = ConfigDict(extra="forbid")

    dephasing_carrier_khz: float = Field(0.0, ge=0, description="载波脉冲去相位速率 γ_c/2π（kHz）")
    dephasing_sideband_khz: float = Field(0.0, ge=0, description="边带脉冲去相位速率 γ_s/2π（kHz）")
    prep_infidelity: float = Field(0.0, ge=0, le=1, description="边带制备/映射脉冲失效概率 ε")
    carrier_infidelity: float = Field(0.0, ge=0, le=1, description="载波脉冲失效概率")
    thermal_occupation: float = Field(0.0, ge=0, description="初始平均声子数 n̄")

    def to_model(self) -> NoiseModel:
        return NoiseModel(
            dephasing_carrier=khz_to_angular(self.dephasing_carrier_khz),
            dephasing_sideband=khz_to_angular(self.dephasing_sideband_khz),
            prep_infidelity=self.prep_infidelity,
            carrier_infidelity=self.carrier_infidelity,
            thermal_occupation=self.thermal_occupation,
        )


class InitialSpec(BaseModel):
    """初态：给出 phonons 时为 Fock 态，否则为热态 thermal(n̄)"""
    model_config = ConfigDict(extra="forbid")

    spins: Optional[List[Literal["down", "up"]]] = Field(None, description="各离子自旋，默认全部 down")
    phonons: Optional[List[int]] = Field(None, description="各模式声子数")


class ObservableSpec(BaseModel):
    """输出列"""
    model_config = ConfigDict(extra="forbid")

    label: str = Field(..., min_length=1, description="列名，如 P10")
    phonons: Optional[List[int]] = Field(None, description="声子占据投影")
    pattern: Optional[List[Literal["bright", "dark"]]] = Field(None, description="亮/暗探测构型")

    def to_observable(self) -> Observable:
        return Observable(
            label=self.label,
            phonons=None if self.phonons is None else tuple(self.phonons),
            pattern=None if self.pattern is None else tuple(self.pattern),
        )


class GridRange(BaseModel):
    """τ 网格的一段：start..stop（含端点），步长 step"""
    model_config = ConfigDict(extra="forbid")

    start_us: float = Field(..., ge=0)
    stop_us: float = Field(..., ge=0)
    step_us: float = Field(..., gt=0)

    def points(self) -> np.ndarray:
        count = math.floor((self.stop_us - self.start_us) / self.step_us + 1e-9)
        if count < 0:
            raise ScenarioValidationError("tau-grid-increasing", f"网格段终点 {self.stop_us} 小于起点 {self.start_us}")
        return np.round(self.start_us + self.step_us * np.arange(count + 1), 9)


class ScenarioOverrides(BaseModel):
    """命令行 / API 对场景字段的覆盖"""
    shots: Optional[int] = Field(None, ge=0, description="测量次数，0 为精确模式")
    seed: Optional[int] = Field(None, ge=0, description="随机种子")
    dt_max_us: Optional[float] = Field(None, gt=0, description="RK4 最大步长（µs）")
    tau_step_us: Optional[float] = Field(None, gt=0, description="统一替换各网格段的步长（µs）")


class ScenarioFile(BaseModel):
    """场景文件（JSON），字段与 Scenario 一一对应"""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1, description="场景名称")
    figure: str = Field("", description="对应的实验图")
    description: str = Field("", description="一行说明")
    n_ions: int = Field(2, ge=1, description="离子数")
    fock_cutoff: int = Field(3, ge=2, description="每个模式的 Fock 截断维度 d")
    hopping: List[HoppingSpec] = Field(..., description="跳跃速率")
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    initial: InitialSpec = Field(default_factory=InitialSpec)
    prep: List[PulseSpec] = Field(default_factory=list, description="制备脉冲")
    dd_pulses: List[TimedPulseSpec] = Field(default_factory=list, description="跳跃时段内的 DD 脉冲")
    mapping: List[PulseSpec] = Field(default_factory=list, description="映射脉冲")
    observables: List[ObservableSpec] = Field(..., min_length=1, description="输出列")
    tau_grid: List[GridRange] = Field(..., min_length=1, description="τ 扫描网格")
    shots: int = Field(0, ge=0, description="测量次数，0 为精确模式")
    seed: int = Field(0, ge=0, description="随机种子")
    dt_max_us: Optional[float] = Field(None, gt=0, description="RK4 最大步长（µs），缺省用全局配置")
    cutoff_tolerance: float = Field(DEFAULT_CUTOFF_TOLERANCE, gt=0, le=1, description="截断边界布居容差")

    def with_overrides(self, overrides: Optional[ScenarioOverrides]) -> "ScenarioFile":
        if overrides is None:
            return self
        update: Dict[str, Any] = {}
        for name in ("shots", "seed", "dt_max_us"):
            value = getattr(overrides, name)
            if value is not None:
                update[name] = value
        if overrides.tau_step_us is not None:
            update["tau_grid"] = [r.model_copy(update={"step_us": overrides.tau_step_us}) for r in self.tau_grid]
        return self.model_copy(update=update)

    def with_overlay(self, overlay: Dict[str, Any]) -> "ScenarioFile":
        """深度合并 overlay（如 calibrate-dephasing 写出的噪声字段）后重新校验"""
        return ScenarioFile.model_validate(_deep_merge(self.model_dump(), overlay))

    def tau_points_us(self) -> np.ndarray:
        points: List[float] = []
        for grid_range in self.tau_grid:
            chunk = grid_range.points()
            if points and chunk.size and abs(chunk[0] - points[-1]) <= GRID_EPS_US:
                chunk = chunk[1:]
            points.extend(chunk.tolist())
        return np.array(points)

    def digest(self) -> str:
        """场景内容的 sha256（规范化 JSON）"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_scenario(self, default_dt_max: float = DEFAULT_DT_MAX) -> Scenario:
        """
        换算为内部 Scenario 并校验不变量

        Raises:
            ScenarioValidationError: 不变量不成立
        """
        rates = {}
        for spec in self.hopping:
            i, j = spec.ions
            if i == j or not (0 <= i < self.n_ions and 0 <= j < self.n_ions):
                raise ScenarioValidationError("hopping-pairs", f"跳跃离子对不合法: {spec.ions}")
            rates[(i, j)] = khz_to_angular(spec.kappa_khz)

        spins = None
        if self.initial.spins is not None:
            spins = tuple(SPIN_UP if s == "up" else SPIN_DOWN for s in self.initial.spins)
        phonons = None if self.initial.phonons is None else tuple(self.initial.phonons)

        scenario = Scenario(
            name=self.name,
            layout=HilbertLayout(self.n_ions, self.fock_cutoff),
            graph=HoppingGraph.from_pairs(self.n_ions, rates),
            noise=self.noise.to_model(),
            tau_grid=self.tau_points_us() * US,
            prep=tuple(p.to_event() for p in self.prep),
            dd_pulses=tuple(p.to_timed() for p in self.dd_pulses),
            mapping=tuple(p.to_event() for p in self.mapping),
            observables=tuple(o.to_observable() for o in self.observables),
            shots=self.shots,
            seed=self.seed,
            dt_max=self.dt_max_us * US if self.dt_max_us is not None else default_dt_max,
            initial_spins=spins,
            initial_phonons=phonons,
            cutoff_tolerance=self.cutoff_tolerance,
            description=self.description,
            figure=self.figure,
        )
        scenario.validate()
        return scenario

    def parameter_echo(self, dt_max: float) -> Dict[str, Any]:
        """全部物理参数的 SI 回显（写入运行清单）"""
        return {
            "n_ions": self.n_ions,
            "fock_cutoff": self.fock_cutoff,
            "kappa_rad_s": {f"{s.ions[0]}-{s.ions[1]}": khz_to_angular(s.kappa_khz) for s in self.hopping},
            "noise": {
                "dephasing_carrier_rad_s": khz_to_angular(self.noise.dephasing_carrier_khz),
                "dephasing_sideband_rad_s": khz_to_angular(self.noise.dephasing_sideband_khz),
                "prep_infidelity": self.noise.prep_infidelity,
                "carrier_infidelity": self.noise.carrier_infidelity,
                "thermal_occupation": self.noise.thermal_occupation,
            },
            "prep": [_pulse_echo(p) for p in self.prep],
            "dd_pulses": [{"time_s": p.time_us * US, **_pulse_echo(p)} for p in self.dd_pulses],
            "mapping": [_pulse_echo(p) for p in self.mapping],
            "tau_s": (self.tau_points_us() * US).tolist(),
            "shots": self.shots,
            "dt_max_s": dt_max,
            "cutoff_tolerance": self.cutoff_tolerance,
        }


def _pulse_echo(spec: PulseSpec) -> Dict[str, Any]:
    event = spec.to_event()
    return {
        "kind": event.kind.value,
        "ion": event.ion,
        "area_rad": event.area,
        "duration_s": event.length,
        "phase_rad": event.phase,
        "rabi_rad_s": event.rabi,
        "detuning_rad_s": event.detuning,
        "chi_rad_s": event.chi,
        "instantaneous": event.instantaneous,
    }


def _deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
