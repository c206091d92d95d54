"""
动力学服务
按分段常数时序演化量子态：纯态走精确幺正传播子，密度矩阵走 Lindblad 主方程（固定步长 RK4）

去相位模型：每个被驱动离子在其脉冲期间带塌缩算符 L = √(γ/2)·σ_z，
载波与边带脉冲分别使用 γ_c、γ_s；自由跳跃期间没有耗散。
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import (
    IntegrationAccuracyError,
    OperatorValidationError,
    ScheduleRangeError,
    StateValidationError,
)
from app.services.hamiltonian import Sideband
from app.services.operators import (
    Eigensystem,
    HilbertLayout,
    Operator,
    QuantumState,
    populations,
    spin_operators,
)

logger = logging.getLogger(__name__)

DEFAULT_DT_MAX = 10e-9
TRACE_DRIFT_LIMIT = 1e-6
# 采样时间与段边界的比较容差（秒）
TIME_EPS = 1e-12


@dataclass(frozen=True)
class NoiseModel:
    """
    噪声模型
    - dephasing_carrier / dephasing_sideband: 载波 / 边带脉冲期间的去相位速率 γ（rad/s）
    - prep_infidelity: 每个边带制备（及映射）脉冲失效为空操作的概率 ε
    - carrier_infidelity: 载波脉冲失效概率
    - thermal_occupation: 初始运动态的平均声子数 n̄
    """
    dephasing_carrier: float = 0.0
    dephasing_sideband: float = 0.0
    prep_infidelity: float = 0.0
    carrier_infidelity: float = 0.0
    thermal_occupation: float = 0.0

    def __post_init__(self):
        for name in ("dephasing_carrier", "dephasing_sideband", "thermal_occupation"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise StateValidationError(f"{name} 必须是非负有限值，当前: {value}")
        for name in ("prep_infidelity", "carrier_infidelity"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise StateValidationError(f"{name} 必须在 [0, 1] 内，当前: {value}")

    @property
    def is_ideal(self) -> bool:
        return not any((
            self.dephasing_carrier,
            self.dephasing_sideband,
            self.prep_infidelity,
            self.carrier_infidelity,
            self.thermal_occupation,
        ))

    def dephasing_rate(self, sideband: Sideband) -> float:
        return self.dephasing_carrier if Sideband(sideband) is Sideband.CARRIER else self.dephasing_sideband

    def infidelity(self, sideband: Sideband) -> float:
        return self.carrier_infidelity if Sideband(sideband) is Sideband.CARRIER else self.prep_infidelity


def dephasing_operator(ion: int, gamma: float, layout: HilbertLayout) -> Operator:
    """L = √(γ/2)·σ_z，使自旋相干以 e^{-γt} 衰减"""
    _, _, sigma_z = spin_operators(ion, layout)
    return Operator(math.sqrt(gamma / 2.0) * sigma_z.matrix, layout, hermitian=True)


def thermal_populations(nbar: float, d: int) -> np.ndarray:
    """热分布 p_n ∝ (n̄/(1+n̄))^n，在截断 d 处截断并重新归一化"""
    if nbar == 0:
        weights = np.zeros(d)
        weights[0] = 1.0
        return weights
    ratio = nbar / (1.0 + nbar)
    weights = ratio ** np.arange(d)
    return weights / weights.sum()


@dataclass(frozen=True, eq=False)
class Segment:
    """
    时序中的一段：常数哈密顿量演化 duration 秒（可带塌缩算符），
    或一个瞬时幺正操作（duration = 0）
    """
    duration: float
    hamiltonian: Optional[Operator] = None
    unitary: Optional[Operator] = None
    collapse_ops: Tuple[Operator, ...] = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))
        if self.duration < 0 or not math.isfinite(self.duration):
            raise ScheduleRangeError(f"段时长必须非负，当前: {self.duration}")
        if (self.hamiltonian is None) == (self.unitary is None):
            raise OperatorValidationError("段必须且只能给出哈密顿量或瞬时幺正算符之一")
        if self.hamiltonian is not None and not self.hamiltonian.hermitian:
            raise OperatorValidationError(f"段 {self.label!r} 的哈密顿量未标记为厄米")
        if self.unitary is not None:
            if not self.unitary.unitary:
                raise OperatorValidationError(f"段 {self.label!r} 的瞬时算符未标记为幺正")
            if self.duration != 0 or self.collapse_ops:
                raise OperatorValidationError("瞬时段的时长必须为 0 且不带塌缩算符")

    @classmethod
    def evolution(
        cls,
        hamiltonian: Operator,
        duration: float,
        collapse_ops: Sequence[Operator] = (),
        label: str = "",
    ) -> "Segment":
        return cls(duration=duration, hamiltonian=hamiltonian, collapse_ops=tuple(collapse_ops), label=label)

    @classmethod
    def instant(cls, unitary: Operator, label: str = "") -> "Segment":
        return cls(duration=0.0, unitary=unitary, label=label)

    @property
    def instantaneous(self) -> bool:
        return self.unitary is not None

    @property
    def dissipative(self) -> bool:
        return bool(self.collapse_ops)


class LindbladGenerator:
    """
    dρ/dt = -i(H_eff ρ − ρ H_eff†) + Σ_j L_j ρ L_j†，H_eff = H − (i/2)Σ L_j†L_j

    对角塌缩算符的 LρL† 按元素相乘计算；支持 (..., dim, dim) 批量输入。
    """

    def __init__(self, hamiltonian: Operator, collapse_ops: Sequence[Operator]):
        dim = hamiltonian.dim
        decay = np.zeros((dim, dim), dtype=complex)
        self.diagonal_weight: Optional[np.ndarray] = None
        self.dense: List[Tuple[np.ndarray, np.ndarray]] = []
        for op in collapse_ops:
            m = op.matrix
            decay += m.conj().T @ m
            if np.count_nonzero(m - np.diag(np.diag(m))) == 0:
                diag = np.diag(m)
                weight = np.outer(diag, diag.conj())
                self.diagonal_weight = weight if self.diagonal_weight is None else self.diagonal_weight + weight
            else:
                self.dense.append((m, m.conj().T))
        self.h_eff = hamiltonian.matrix - 0.5j * decay
        self.h_eff_dag = self.h_eff.conj().T

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        drho = -1j * (self.h_eff @ rho - rho @ self.h_eff_dag)
        if self.diagonal_weight is not None:
            drho += self.diagonal_weight * rho
        for m, m_dag in self.dense:
            drho += m @ rho @ m_dag
        return drho


class AdjointLindbladGenerator(LindbladGenerator):
    """对偶（Heisenberg）生成元：dA/dt = i(H_eff† A − A H_eff) + Σ_j L_j† A L_j"""

    def __call__(self, observables: np.ndarray) -> np.ndarray:
        dobs = 1j * (self.h_eff_dag @ observables - observables @ self.h_eff)
        if self.diagonal_weight is not None:
            dobs += self.diagonal_weight.conj() * observables
        for m, m_dag in self.dense:
            dobs += m_dag @ observables @ m
        return dobs


def _rk4_steps(generator, x: np.ndarray, duration: float, dt_max: float) -> Tuple[np.ndarray, float]:
    n_steps = max(1, math.ceil(duration / dt_max - 1e-9))
    h = duration / n_steps
    for _ in range(n_steps):
        k1 = generator(x)
        k2 = generator(x + 0.5 * h * k1)
        k3 = generator(x + 0.5 * h * k2)
        k4 = generator(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x, h


def rk4_integrate(generator: LindbladGenerator, rho: np.ndarray, duration: float, dt_max: float) -> np.ndarray:
    """
    固定步长 RK4，步长 h = duration / ceil(duration / dt_max) ≤ dt_max

    Raises:
        IntegrationAccuracyError: 迹漂移超过 1e-6 或矩阵元发散
    """
    if dt_max <= 0:
        raise IntegrationAccuracyError(f"dt_max 必须为正，当前: {dt_max}")
    if duration <= 0:
        return rho
    rho, h = _rk4_steps(generator, rho, duration, dt_max)

    trace = np.trace(rho, axis1=-2, axis2=-1)
    drift = float(np.abs(trace - 1.0).max())
    if drift > TRACE_DRIFT_LIMIT or not np.all(np.isfinite(rho)) or np.abs(rho).max() > 1.0 + TRACE_DRIFT_LIMIT:
        raise IntegrationAccuracyError(
            f"RK4 积分失稳（迹漂移 {drift:.3e}，步长 {h:.3e} s），请减小 dt_max"
        )
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    return rho / np.asarray(trace.real)[..., None, None]


def rk4_integrate_observables(
    generator: "AdjointLindbladGenerator", observables: np.ndarray, duration: float, dt_max: float
) -> np.ndarray:
    """Heisenberg 绘景下的 RK4；投影算符演化后谱范数不超过 1，据此检查发散"""
    if dt_max <= 0:
        raise IntegrationAccuracyError(f"dt_max 必须为正，当前: {dt_max}")
    if duration <= 0:
        return observables
    observables, h = _rk4_steps(generator, observables, duration, dt_max)
    if not np.all(np.isfinite(observables)) or np.abs(observables).max() > 1.0 + TRACE_DRIFT_LIMIT:
        raise IntegrationAccuracyError(f"RK4 积分失稳（步长 {h:.3e} s），请减小 dt_max")
    return 0.5 * (observables + np.conj(np.swapaxes(observables, -1, -2)))


class SegmentEvolver:
    """对单个段缓存本征分解 / Lindblad 生成元，按任意时长推进态"""

    def __init__(self, segment: Segment, dt_max: float = DEFAULT_DT_MAX):
        self.segment = segment
        self.dt_max = dt_max
        self._eigensystem: Optional[Eigensystem] = None
        self._generator: Optional[LindbladGenerator] = None

    def _unitary(self, dt: float) -> np.ndarray:
        if self.segment.instantaneous:
            return self.segment.unitary.matrix
        if self._eigensystem is None:
            self._eigensystem = Eigensystem.of(self.segment.hamiltonian)
        return self._eigensystem.unitary_matrix(dt)

    def advance(self, state: QuantumState, dt: float) -> QuantumState:
        if state.is_pure:
            if self.segment.dissipative:
                raise StateValidationError(f"段 {self.segment.label!r} 带塌缩算符，纯态需改用 evolve_lindblad")
            return QuantumState.pure(self._unitary(dt) @ state.data, state.layout)

        if not self.segment.dissipative:
            u = self._unitary(dt)
            return QuantumState.density(u @ state.data @ u.conj().T, state.layout)

        if self._generator is None:
            self._generator = LindbladGenerator(self.segment.hamiltonian, self.segment.collapse_ops)
        rho = rk4_integrate(self._generator, np.array(state.data), dt, self.dt_max)
        return QuantumState.density(rho, state.layout)


def evolve_pure(state: QuantumState, segment: Segment) -> QuantumState:
    """|ψ'⟩ = exp(-iHT)|ψ⟩（瞬时段为 U|ψ⟩）"""
    if not state.is_pure:
        raise StateValidationError("evolve_pure 只接受纯态")
    if segment.dissipative:
        raise StateValidationError(f"段 {segment.label!r} 带塌缩算符，请使用 evolve_lindblad")
    return SegmentEvolver(segment).advance(state, segment.duration)


def evolve_lindblad(rho: QuantumState, segment: Segment, dt_max: float = DEFAULT_DT_MAX) -> QuantumState:
    """
    积分 Lindblad 主方程；无塌缩算符时退化为 von Neumann 方程，直接用精确传播子 UρU†

    Raises:
        IntegrationAccuracyError: 步长过大导致积分失稳
    """
    if dt_max <= 0:
        raise IntegrationAccuracyError(f"dt_max 必须为正，当前: {dt_max}")
    return SegmentEvolver(segment, dt_max).advance(rho.to_density(), segment.duration)


def evolve_observables(observables: np.ndarray, segment: Segment, dt_max: float = DEFAULT_DT_MAX) -> np.ndarray:
    """
    把一批可观测量 (k, dim, dim) 按段的对偶映射回推：Tr(A·E(ρ)) = Tr(E†(A)·ρ)

    读出前的映射脉冲与 τ 无关，回推一次即可复用到整条扫描曲线。
    """
    if segment.instantaneous:
        u = segment.unitary.matrix
        return u.conj().T @ observables @ u
    if not segment.dissipative:
        u = Eigensystem.of(segment.hamiltonian).unitary_matrix(segment.duration)
        return u.conj().T @ observables @ u
    generator = AdjointLindbladGenerator(segment.hamiltonian, segment.collapse_ops)
    return rk4_integrate_observables(generator, np.array(observables, dtype=complex), segment.duration, dt_max)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """run_schedule 的结果：各采样时刻的态快照"""
    times: np.ndarray
    states: List[QuantumState] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[Tuple[float, QuantumState]]:
        return iter(zip(self.times.tolist(), self.states))

    def probabilities(self, projectors: Sequence[Operator]) -> np.ndarray:
        """形状 (n_times, n_projectors) 的布居表"""
        return np.array([populations(state, projectors) for state in self.states])


def schedule_duration(segments: Sequence[Segment]) -> float:
    return float(sum(segment.duration for segment in segments))


def run_schedule(
    initial: QuantumState,
    segments: Sequence[Segment],
    sample_times: Sequence[float],
    dt_max: float = DEFAULT_DT_MAX,
) -> Trajectory:
    """
    沿时序演化并在每个采样时刻记录态

    - 段在采样点处切分，段边界精确（不插值）
    - 时刻 t 的快照只包含 [0, t) 内的演化：恰好位于 t 的瞬时段在快照之后作用
    - 任一段带塌缩算符时，纯态初值自动提升为密度矩阵

    Raises:
        ScheduleRangeError: 采样时间未排序、为负或超出时序总时长
    """
    times = np.asarray(sample_times, dtype=float)
    total = schedule_duration(segments)
    if times.size:
        if np.any(np.diff(times) < 0):
            raise ScheduleRangeError("采样时间必须按升序排列")
        if times[0] < -TIME_EPS or times[-1] > total + TIME_EPS:
            raise ScheduleRangeError(
                f"采样时间 [{times[0]:.6e}, {times[-1]:.6e}] s 超出时序范围 [0, {total:.6e}] s"
            )

    state = initial
    if state.is_pure and any(segment.dissipative for segment in segments):
        state = state.to_density()

    snapshots: List[QuantumState] = []
    index = 0
    clock = 0.0
    for segment in segments:
        if segment.instantaneous:
            while index < times.size and times[index] <= clock + TIME_EPS:
                snapshots.append(state)
                index += 1
            state = SegmentEvolver(segment, dt_max).advance(state, 0.0)
            continue

        evolver = SegmentEvolver(segment, dt_max)
        end = clock + segment.duration
        local = 0.0
        while index < times.size and times[index] <= end + TIME_EPS:
            target = min(max(times[index] - clock, 0.0), segment.duration)
            if target > local:
                state = evolver.advance(state, target - local)
                local = target
            snapshots.append(state)
            index += 1
        if segment.duration > local:
            state = evolver.advance(state, segment.duration - local)
        logger.debug("段 %s 完成，t = %.3f µs", segment.label or "-", end * 1e6)
        clock = end

    while index < times.size:
        snapshots.append(state)
        index += 1
    return Trajectory(times=times, states=snapshots)
