"""
去相位速率校准
对单个离子 |↓,0⟩ 施加蓝边带 π 脉冲（带去相位 γ_s），二分 γ_s 使 |↑,1⟩ 上的布居等于 1 − 目标失效率
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.exceptions import CalibrationError
from app.models.scenario import ScenarioFile, angular_to_khz, khz_to_angular
from app.services.dynamics import DEFAULT_DT_MAX, NoiseModel
from app.services.experiment import experiment_service
from app.services.operators import SPIN_DOWN, SPIN_UP, HilbertLayout, diagonal_projector, populations
from app.services.schedule import PulseEvent, PulseKind

logger = logging.getLogger(__name__)

CALIBRATION_TOLERANCE = 1e-3
# 二分上界 γ_max = 20 × 2g：此时 Zeno 抑制使失效率接近 1
RATE_BOUND_FACTOR = 20.0
MAX_ITERATIONS = 80
# 可建模的目标失效率上限（开区间）
MAX_TARGET = 0.5


@dataclass(frozen=True)
class CalibrationResult:
    """校准结果：dephasing_sideband 为 rad/s"""
    target: float
    dephasing_sideband: float
    achieved_infidelity: float
    rabi: float
    iterations: int

    @property
    def dephasing_sideband_khz(self) -> float:
        return angular_to_khz(self.dephasing_sideband)

    def overlay(self) -> dict:
        """写入预设覆盖文件的内容"""
        return {"noise": {"dephasing_sideband_khz": round(self.dephasing_sideband_khz, 6)}}


def bsb_pi_infidelity(gamma: float, rabi: float, dt_max: float = DEFAULT_DT_MAX) -> float:
    """单个蓝边带 π 脉冲（去相位速率 gamma）后 1 − P(|↑,1⟩)"""
    layout = HilbertLayout(n_ions=1, fock_cutoff=3)
    pulse = PulseEvent(kind=PulseKind.BSB, ion=0, area=math.pi, rabi=rabi)
    state = experiment_service.apply_pulses(
        layout.basis_state([SPIN_DOWN], [0]), [pulse], NoiseModel(dephasing_sideband=gamma), dt_max
    )
    target = layout.basis_index([SPIN_UP], [1])
    mask = np.zeros(layout.dim, dtype=bool)
    mask[target] = True
    return 1.0 - populations(state, [diagonal_projector(mask, layout)])[0]


def calibrate_dephasing(
    target: float,
    rabi: float,
    dt_max: float = DEFAULT_DT_MAX,
    tolerance: float = CALIBRATION_TOLERANCE,
) -> CalibrationResult:
    """
    二分 γ_s ∈ [0, 20·rabi]，使单个蓝边带 π 脉冲的失效率等于 target（误差 ≤ tolerance）

    Raises:
        CalibrationError: target 不在 [0, 0.5) 内，或在速率上界内不可达
    """
    if not 0.0 <= target < MAX_TARGET:
        raise CalibrationError(f"目标失效率 {target} 超出可建模范围 [0, {MAX_TARGET})")
    if target == 0.0:
        return CalibrationResult(target, 0.0, bsb_pi_infidelity(0.0, rabi, dt_max), rabi, 0)

    low, high = 0.0, RATE_BOUND_FACTOR * rabi
    if bsb_pi_infidelity(high, rabi, dt_max) < target:
        raise CalibrationError(f"目标失效率 {target} 在 γ_s ≤ {RATE_BOUND_FACTOR:g}·2g 内不可达")

    gamma = achieved = 0.0
    for iteration in range(1, MAX_ITERATIONS + 1):
        gamma = 0.5 * (low + high)
        achieved = bsb_pi_infidelity(gamma, rabi, dt_max)
        if achieved < target:
            low = gamma
        else:
            high = gamma
        # 内部收敛判据比 tolerance 严格三个数量级
        if abs(achieved - target) <= 1e-3 * tolerance:
            break
    if abs(achieved - target) > tolerance:
        raise CalibrationError(f"二分未收敛：失效率 {achieved:.6f}，目标 {target}")
    logger.info("校准完成：γ_s/2π = %.4f kHz（%d 次迭代）", angular_to_khz(gamma), iteration)
    return CalibrationResult(target, gamma, achieved, rabi, iteration)


def sideband_rabi(scenario: ScenarioFile, default_khz: Optional[float] = None) -> float:
    """场景中第一个蓝边带脉冲的拉比频率（rad/s），找不到时用 default_khz"""
    pulses = [*scenario.prep, *scenario.mapping, *scenario.dd_pulses]
    for pulse in pulses:
        if pulse.kind == "bsb" and pulse.rabi_khz is not None:
            return khz_to_angular(pulse.rabi_khz)
    if default_khz is None:
        raise CalibrationError(f"场景 {scenario.name} 中没有蓝边带脉冲，请指定拉比频率")
    return khz_to_angular(default_khz)
