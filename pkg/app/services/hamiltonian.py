"""
哈密顿量构造服务
跳跃（hopping）、共振/失谐边带驱动、色散耦合、载波驱动、旋转脉冲和理想相移算符

单位：所有频率均为角频率（rad/s），时间为秒。
失谐驱动写在不含时的旋转坐标系中：H = H_JC + (Δ/2)σ_z，使每个时间段的哈密顿量不含时、传播子精确。
κ_ij 由用户给定，不从囚禁几何推导（跳跃速率随离子间距按 1/d³ 标度，此处不计算）。
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from app.exceptions import OperatorValidationError
from app.services.operators import (
    Eigensystem,
    HilbertLayout,
    Operator,
    embed,
    Factor,
    mode_operators,
    number_operator,
    propagator,
    spin_operators,
)

logger = logging.getLogger(__name__)

# χ/κ 至少达到该比值时，色散相移才可视为相对跳跃“瞬时”
FEASIBLE_CHI_OVER_KAPPA = 10.0


class Sideband(str, Enum):
    RED = "red"
    BLUE = "blue"
    CARRIER = "carrier"


@dataclass(frozen=True, eq=False)
class HoppingGraph:
    """跳跃图：对称的跳跃速率矩阵 κ_ij（rad/s），对角为零"""
    kappa: np.ndarray

    def __post_init__(self):
        kappa = np.array(self.kappa, dtype=float)
        if kappa.ndim != 2 or kappa.shape[0] != kappa.shape[1]:
            raise OperatorValidationError(f"κ 必须是方阵，当前形状: {kappa.shape}")
        if not np.all(np.isfinite(kappa)) or np.any(kappa < 0):
            raise OperatorValidationError("κ 的所有元素必须有限且非负")
        if np.any(np.diag(kappa) != 0):
            raise OperatorValidationError("κ 的对角元必须为零")
        if not np.array_equal(kappa, kappa.T):
            raise OperatorValidationError("κ 必须对称: κ_ij = κ_ji")
        kappa.setflags(write=False)
        object.__setattr__(self, "kappa", kappa)

    @property
    def n_ions(self) -> int:
        return self.kappa.shape[0]

    @classmethod
    def from_pairs(cls, n_ions: int, rates: Dict[Tuple[int, int], float]) -> "HoppingGraph":
        kappa = np.zeros((n_ions, n_ions))
        for (i, j), rate in rates.items():
            kappa[i, j] = kappa[j, i] = rate
        return cls(kappa)

    @classmethod
    def two_ion(cls, kappa_12: float) -> "HoppingGraph":
        return cls.from_pairs(2, {(0, 1): kappa_12})


@dataclass(frozen=True)
class DriveParams:
    """激光驱动参数；rabi 为参考跃迁的拉比频率 2g（rad/s）"""
    ion: int
    sideband: Sideband
    rabi: float
    detuning: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sideband", Sideband(self.sideband))
        if not (math.isfinite(self.rabi) and self.rabi > 0):
            raise OperatorValidationError(f"拉比频率必须为正，当前: {self.rabi}")
        if not math.isfinite(self.detuning):
            raise OperatorValidationError("失谐必须是有限值")

    @property
    def g(self) -> float:
        return self.rabi / 2.0

    @property
    def resonant(self) -> bool:
        return self.detuning == 0.0


def build_hopping(graph: HoppingGraph, layout: HilbertLayout) -> Operator:
    """H = Σ_{i<j} (κ_ij/2)(a_i a_j† + a_i† a_j)，在所有自旋因子上为单位算符"""
    if graph.n_ions != layout.n_ions:
        raise OperatorValidationError(f"跳跃图有 {graph.n_ions} 个离子，布局有 {layout.n_ions} 个")
    matrix = np.zeros((layout.dim, layout.dim), dtype=complex)
    ladders = [mode_operators(site, layout) for site in range(layout.n_ions)]
    for i in range(layout.n_ions):
        for j in range(i + 1, layout.n_ions):
            rate = graph.kappa[i, j]
            if rate == 0.0:
                continue
            term = ladders[i][0].matrix @ ladders[j][1].matrix
            matrix += 0.5 * rate * (term + term.conj().T)
    return Operator(matrix, layout, hermitian=True)


def build_sideband(params: DriveParams, layout: HilbertLayout) -> Operator:
    """
    边带驱动
    红边带: H = g(e^{iφ} a†σ⁻ + e^{-iφ} aσ⁺) + (Δ/2)σ_z
    蓝边带: H = g(e^{iφ} a†σ⁺ + e^{-iφ} aσ⁻) + (Δ/2)σ_z

    Raises:
        OperatorValidationError: 传入载波驱动（应使用 build_carrier）
    """
    if params.sideband is Sideband.CARRIER:
        raise OperatorValidationError("载波驱动请使用 build_carrier")
    layout.check_site(params.ion)
    _, a_dag = mode_operators(params.ion, layout)
    sigma_plus, sigma_minus, sigma_z = spin_operators(params.ion, layout)
    spin_partner = sigma_minus if params.sideband is Sideband.RED else sigma_plus
    coupling = np.exp(1j * params.phase) * (a_dag.matrix @ spin_partner.matrix)
    matrix = params.g * (coupling + coupling.conj().T) + 0.5 * params.detuning * sigma_z.matrix
    return Operator(matrix, layout, hermitian=True)


def build_carrier(ion: int, rabi: float, phase: float, layout: HilbertLayout) -> Operator:
    """H = (Ω/2)(e^{iφ}σ⁺ + e^{-iφ}σ⁻)，不作用于任何模式"""
    if not (math.isfinite(rabi) and rabi > 0):
        raise OperatorValidationError(f"载波拉比频率必须为正，当前: {rabi}")
    layout.check_site(ion)
    sigma_plus, _, _ = spin_operators(ion, layout)
    coupling = np.exp(1j * phase) * sigma_plus.matrix
    return Operator(0.5 * rabi * (coupling + coupling.conj().T), layout, hermitian=True)


def build_dispersive(ion: int, chi: float, layout: HilbertLayout) -> Operator:
    """H = χ σ_z a†a（乘积基下对角）"""
    if not math.isfinite(chi):
        raise OperatorValidationError("色散耦合强度 χ 必须是有限值")
    _, _, sigma_z = spin_operators(ion, layout)
    n = embed(number_operator(layout.fock_cutoff), ion, Factor.MODE, layout)
    return Operator(chi * (sigma_z.matrix @ n.matrix), layout, hermitian=True)


def drive_hamiltonian(params: DriveParams, layout: HilbertLayout) -> Operator:
    """按驱动类型分派到 build_carrier / build_sideband"""
    if params.sideband is Sideband.CARRIER:
        return build_carrier(params.ion, params.rabi, params.phase, layout)
    return build_sideband(params, layout)


def phase_shift_unitary(mode: int, theta: float, layout: HilbertLayout) -> Operator:
    """U = exp(iθ a_k† a_k)：第 k 个模式的 Fock 能级 n 乘以 e^{iθn}"""
    layout.check_site(mode)
    phases = np.exp(1j * theta * layout.phonon_labels[:, mode])
    return Operator(np.diag(phases), layout, unitary=True)


def pulse_duration(params: DriveParams, area: float) -> float:
    """脉冲面积 → 时长；面积以参考跃迁（n=0↔1 边带）的拉比频率 2g 标定"""
    return area / params.rabi


def rotation_unitary(params: DriveParams, theta: float, layout: HilbertLayout) -> Operator:
    """
    共振旋转脉冲 R(θ, φ) = exp[-i(θ/2)(e^{iφ}a†σ∓ + e^{-iφ}aσ±)]

    与 propagator(build_sideband(params), θ/2g) 逐元素相等；写成 exp[+i(θ/2)(…)] 时对应方位角 φ+π。
    Fock 能级 n 上的实际转角为 θ·√(n+1)（以参考跃迁计）。

    Raises:
        OperatorValidationError: 失谐驱动（需通过 build_sideband + propagator 演化）
    """
    if not params.resonant:
        raise OperatorValidationError("旋转算符只适用于共振驱动；失谐驱动请用 build_sideband + propagator")
    return propagator(drive_hamiltonian(params, layout), pulse_duration(params, theta))


def dispersive_shift(rabi: float, detuning: float) -> float:
    """色散极限下的 χ = g²/Δ（g = rabi/2）"""
    if detuning == 0:
        raise OperatorValidationError("色散极限需要非零失谐")
    return (rabi / 2.0) ** 2 / detuning


def offresonant_excitation_estimate(rabi: float, detuning: float) -> float:
    """
    失谐边带脉冲的非共振激发概率 P_Δ ≈ 4g²/Δ²（rabi = 2g）

    当 Δ ≤ 2g 时估计饱和为 1，并记录超出适用范围的警告。
    """
    if detuning == 0:
        raise OperatorValidationError("失谐 Δ 不能为零")
    estimate = (rabi / detuning) ** 2
    if estimate >= 1.0:
        logger.warning("P_Δ 估计超出适用范围 (Δ=%.4g ≤ 2g=%.4g)，按 1 截断", abs(detuning), rabi)
        return 1.0
    return estimate


@dataclass(frozen=True)
class FeasibilityReport:
    """色散相移方案的可行性评估"""
    chi: float
    chi_over_kappa: float
    excitation_probability: float
    phase_shift_duration: float
    feasible: bool


def feasibility_report(rabi: float, detuning: float, kappa: float) -> FeasibilityReport:
    """评估 χ ≫ κ 条件：相移操作时长 π/χ 需远短于跳跃时间尺度"""
    chi = dispersive_shift(rabi, detuning)
    ratio = abs(chi) / kappa if kappa > 0 else math.inf
    return FeasibilityReport(
        chi=chi,
        chi_over_kappa=ratio,
        excitation_probability=offresonant_excitation_estimate(rabi, detuning),
        phase_shift_duration=math.pi / abs(chi),
        feasible=ratio >= FEASIBLE_CHI_OVER_KAPPA,
    )


def free_hopping_probability(kappa: float, t: float) -> float:
    """两离子单声子自由跳跃的解析解 P_01(t) = sin²(κt/2)"""
    return math.sin(0.5 * kappa * t) ** 2


def relative_dispersive_phase(params: DriveParams, duration: float, layout: HilbertLayout) -> float:
    """
    失谐红边带演化 duration 后 |↓,1⟩ 相对 |↓,0⟩ 积累的相位
    （用于验证色散极限 θ = χT；只看目标离子，其它离子取 |↓,0⟩）
    """
    spins = [0] * layout.n_ions
    phonons = [0] * layout.n_ions
    ground = layout.basis_index(spins, phonons)
    phonons[params.ion] = 1
    excited = layout.basis_index(spins, phonons)
    unitary = Eigensystem.of(build_sideband(params, layout)).unitary_matrix(duration)
    return float(np.angle(unitary[excited, excited] * np.conj(unitary[ground, ground])))
