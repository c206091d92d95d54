"""
脉冲事件与时序编译
把制备 / 动力学解耦（DD）/ 映射脉冲编译成 dynamics 可执行的 Segment 列表

约定：
- 有限时长脉冲期间跳跃始终开启（段哈密顿量 = H_hop + Σ H_drive）
- 制备与映射脉冲不含跳跃（τ = 0 定义为制备结束时刻，读出相对跳跃可视为瞬时）
- 同一离子上的脉冲不允许重叠；不同离子上的脉冲可以同时进行
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import ScenarioValidationError, ScheduleConflictError
from app.services.dynamics import TIME_EPS, NoiseModel, Segment, dephasing_operator
from app.services.hamiltonian import (
    DriveParams,
    HoppingGraph,
    Sideband,
    build_dispersive,
    build_hopping,
    drive_hamiltonian,
    phase_shift_unitary,
    pulse_duration,
    rotation_unitary,
)
from app.services.operators import HilbertLayout, Operator

logger = logging.getLogger(__name__)


class PulseKind(str, Enum):
    CARRIER = "carrier"
    BSB = "bsb"
    RSB = "rsb"
    DISPERSIVE = "dispersive"
    PHASE_SHIFT = "phase_shift"
    WAIT = "wait"


_DRIVEN = {
    PulseKind.CARRIER: Sideband.CARRIER,
    PulseKind.BSB: Sideband.BLUE,
    PulseKind.RSB: Sideband.RED,
}
# 允许瞬时作用的事件：理想相移与共振旋转
_INSTANT_CAPABLE = {PulseKind.PHASE_SHIFT, PulseKind.CARRIER, PulseKind.BSB, PulseKind.RSB}


@dataclass(frozen=True)
class PulseEvent:
    """
    单个脉冲事件（SI 单位）
    - area: 脉冲面积（弧度，π、2π…），以参考跃迁标定；与 duration 二选一
    - rabi: 载波/边带驱动的参考拉比频率 2g（rad/s）
    - chi: 色散耦合 χ（rad/s），用于 dispersive 及有限时长 phase_shift
    """
    kind: PulseKind
    ion: int = 0
    area: Optional[float] = None
    duration: Optional[float] = None
    phase: float = 0.0
    rabi: Optional[float] = None
    detuning: float = 0.0
    chi: Optional[float] = None
    instantaneous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PulseKind(self.kind))
        label = f"{self.kind.value}@ion{self.ion}"
        if (self.area is None) == (self.duration is None):
            raise ScenarioValidationError("pulse-area-xor-duration", f"{label}: area 与 duration 必须且只能给出一个")
        if self.duration is not None and self.duration < 0:
            raise ScenarioValidationError("pulse-duration", f"{label}: 时长不能为负")
        if self.instantaneous and self.kind not in _INSTANT_CAPABLE:
            raise ScenarioValidationError("pulse-instantaneous", f"{label}: 只有相移和旋转类脉冲可以瞬时作用")
        if self.instantaneous and self.area is None:
            raise ScenarioValidationError("pulse-instantaneous", f"{label}: 瞬时脉冲需要给出面积")
        if self.kind in _DRIVEN:
            if self.rabi is None or self.rabi <= 0:
                raise ScenarioValidationError("pulse-rabi", f"{label}: 驱动脉冲需要正的拉比频率")
            if self.area is not None and self.area < 0:
                raise ScenarioValidationError("pulse-area", f"{label}: 驱动脉冲面积不能为负，反向旋转请改用相位 φ + π")
            if self.instantaneous and self.detuning != 0:
                raise ScenarioValidationError("pulse-instantaneous", f"{label}: 失谐脉冲不能瞬时作用")
        if self.kind is PulseKind.DISPERSIVE and not self.chi:
            raise ScenarioValidationError("pulse-chi", f"{label}: 色散脉冲需要非零 χ")
        if self.kind is PulseKind.PHASE_SHIFT:
            if self.area is None:
                raise ScenarioValidationError("pulse-area", f"{label}: 相移需要给出相位 θ")
            if not self.instantaneous and not self.chi:
                raise ScenarioValidationError("pulse-chi", f"{label}: 有限时长相移需要 χ")
        if self.kind is PulseKind.WAIT and self.duration is None:
            raise ScenarioValidationError("pulse-duration", f"{label}: 等待事件需要时长")

    @property
    def label(self) -> str:
        return f"{self.kind.value}@ion{self.ion}"

    @property
    def sideband(self) -> Optional[Sideband]:
        return _DRIVEN.get(self.kind)

    @property
    def drive(self) -> Optional[DriveParams]:
        if self.sideband is None:
            return None
        return DriveParams(self.ion, self.sideband, self.rabi, self.detuning, self.phase)

    @property
    def length(self) -> float:
        """在时间轴上占用的时长（秒）"""
        if self.instantaneous:
            return 0.0
        if self.duration is not None:
            return self.duration
        if self.drive is not None:
            return pulse_duration(self.drive, self.area)
        return abs(self.area / self.chi)

    def hamiltonian(self, layout: HilbertLayout) -> Operator:
        if self.drive is not None:
            return drive_hamiltonian(self.drive, layout)
        if self.kind in (PulseKind.DISPERSIVE, PulseKind.PHASE_SHIFT):
            # 自旋处于 |↓⟩ 时 exp(-iχσ_z n T) = exp(iχT n)，即 θ = χT 的相移
            return build_dispersive(self.ion, self.chi, layout)
        return Operator(np.zeros((layout.dim, layout.dim)), layout, hermitian=True)

    def unitary(self, layout: HilbertLayout) -> Operator:
        if self.kind is PulseKind.PHASE_SHIFT:
            return phase_shift_unitary(self.ion, self.area, layout)
        return rotation_unitary(self.drive, self.area, layout)

    def dephasing_rate(self, noise: NoiseModel) -> float:
        if self.kind is PulseKind.WAIT:
            return 0.0
        if self.sideband is None:
            return noise.dephasing_sideband
        return noise.dephasing_rate(self.sideband)

    def collapse_ops(self, noise: NoiseModel, layout: HilbertLayout) -> List[Operator]:
        gamma = self.dephasing_rate(noise)
        return [dephasing_operator(self.ion, gamma, layout)] if gamma > 0 else []

    def infidelity(self, noise: NoiseModel) -> float:
        return noise.infidelity(self.sideband) if self.sideband is not None else 0.0

    def segment(self, layout: HilbertLayout, noise: NoiseModel) -> Segment:
        """不含跳跃的单脉冲段（制备、映射使用）"""
        if self.instantaneous:
            return Segment.instant(self.unitary(layout), label=self.label)
        return Segment.evolution(
            self.hamiltonian(layout),
            self.length,
            self.collapse_ops(noise, layout),
            label=self.label,
        )


@dataclass(frozen=True)
class TimedPulse:
    """时间轴上的 DD 脉冲：time 为起始时刻（秒，从制备结束起算）"""
    time: float
    event: PulseEvent

    @property
    def end(self) -> float:
        return self.time + self.event.length


def check_conflicts(pulses: Sequence[TimedPulse]) -> None:
    """
    同一离子上的脉冲不得重叠；瞬时脉冲不得落在另一个有限脉冲内部

    Raises:
        ScheduleConflictError
    """
    by_ion: Dict[int, List[TimedPulse]] = {}
    for pulse in pulses:
        by_ion.setdefault(pulse.event.ion, []).append(pulse)
    for ion, group in by_ion.items():
        ordered = sorted(group, key=lambda p: (p.time, p.end))
        for earlier, later in zip(ordered, ordered[1:]):
            if later.time < earlier.end - TIME_EPS:
                raise ScheduleConflictError(
                    f"离子 {ion} 上的脉冲重叠: {earlier.event.label} [{earlier.time * 1e6:.3f}, "
                    f"{earlier.end * 1e6:.3f}] µs 与 {later.event.label} 起始于 {later.time * 1e6:.3f} µs"
                )


def compile_body(
    graph: HoppingGraph,
    pulses: Sequence[TimedPulse],
    duration: float,
    noise: NoiseModel,
    layout: HilbertLayout,
) -> List[Segment]:
    """
    把跳跃时段 [0, duration] 与其中的 DD 脉冲编译为段列表
    超出 duration 的脉冲在 duration 处截断（扫描读出语义）

    Raises:
        ScheduleConflictError: 同一离子上的脉冲重叠
        ScenarioValidationError: 脉冲起始时刻不在 [0, duration] 内
    """
    for pulse in pulses:
        if pulse.time < -TIME_EPS or pulse.time > duration + TIME_EPS:
            raise ScenarioValidationError(
                "dd-within-body",
                f"DD 脉冲 {pulse.event.label} 起始于 {pulse.time * 1e6:.3f} µs，超出跳跃时段 [0, {duration * 1e6:.3f}] µs",
            )
    check_conflicts(pulses)

    hopping = build_hopping(graph, layout)
    boundaries = {0.0, duration}
    for pulse in pulses:
        boundaries.add(min(pulse.time, duration))
        if not pulse.event.instantaneous:
            boundaries.add(min(pulse.end, duration))
    edges = _merge_close(sorted(boundaries))

    finite = [(index, p) for index, p in enumerate(pulses) if not p.event.instantaneous]
    instants = [p for p in pulses if p.event.instantaneous]
    cache: Dict[FrozenSet[int], Tuple[Operator, List[Operator], str]] = {}
    segments: List[Segment] = []

    def emit_instants(at: float) -> None:
        for pulse in instants:
            if abs(pulse.time - at) <= TIME_EPS:
                segments.append(Segment.instant(pulse.event.unitary(layout), label=pulse.event.label))

    for start, stop in zip(edges, edges[1:]):
        emit_instants(start)
        active = frozenset(
            index for index, p in finite
            if p.time <= start + TIME_EPS and p.end >= stop - TIME_EPS
        )
        if active not in cache:
            hamiltonian = hopping
            collapse: List[Operator] = []
            labels = []
            for index in sorted(active):
                event = pulses[index].event
                hamiltonian = hamiltonian + event.hamiltonian(layout)
                collapse.extend(event.collapse_ops(noise, layout))
                labels.append(event.label)
            cache[active] = (hamiltonian, collapse, "+".join(["hop", *labels]))
        hamiltonian, collapse, label = cache[active]
        segments.append(Segment.evolution(hamiltonian, stop - start, collapse, label=label))
    emit_instants(edges[-1])
    logger.debug("跳跃时段编译为 %d 段", len(segments))
    return segments


def _merge_close(edges: List[float]) -> List[float]:
    merged = [edges[0]]
    for edge in edges[1:]:
        if edge - merged[-1] > TIME_EPS:
            merged.append(edge)
    return merged
