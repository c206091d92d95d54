"""
实验流程服务
制备 → 跳跃时段（插入 DD 脉冲）→ 映射 → 探测（可选有限次测量采样）

扫描读出语义：每个 τ 对应一次独立实验，跳跃时段在 τ 处截断（正在进行的 DD 脉冲一并截断）。
因为截断前的演化与 τ 无关，整条曲线只需沿最长时序演化一次，在各 τ 处取快照。
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import get_settings
from app.exceptions import FockCutoffError, ScenarioValidationError
from app.services.dynamics import (
    DEFAULT_DT_MAX,
    NoiseModel,
    SegmentEvolver,
    evolve_observables,
    run_schedule,
    thermal_populations,
)
from app.services.hamiltonian import HoppingGraph
from app.services.operators import (
    PROBABILITY_TOL,
    SPIN_DOWN,
    SPIN_UP,
    HilbertLayout,
    Operator,
    QuantumState,
    occupation_projector,
    populations,
    spin_pattern_projector,
)
from app.services.schedule import PulseEvent, TimedPulse, compile_body

logger = logging.getLogger(__name__)

# 荧光探测：|↓⟩（S 态）发光为亮，|↑⟩ 为暗
BRIGHT = "bright"
DARK = "dark"
_PATTERN_SPIN = {BRIGHT: SPIN_DOWN, DARK: SPIN_UP}

DEFAULT_CUTOFF_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Observable:
    """带标签的投影：声子占据（对自旋求和）或亮/暗构型（对声子求和），二选一"""
    label: str
    phonons: Optional[Tuple[int, ...]] = None
    pattern: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if (self.phonons is None) == (self.pattern is None):
            raise ScenarioValidationError("observable-kind", f"{self.label}: phonons 与 pattern 必须且只能给出一个")
        if self.pattern is not None:
            object.__setattr__(self, "pattern", tuple(self.pattern))
            unknown = set(self.pattern) - set(_PATTERN_SPIN)
            if unknown:
                raise ScenarioValidationError("observable-pattern", f"{self.label}: 未知的探测结果 {sorted(unknown)}")
        else:
            object.__setattr__(self, "phonons", tuple(self.phonons))

    def projector(self, layout: HilbertLayout) -> Operator:
        if self.phonons is not None:
            return occupation_projector(self.phonons, layout)
        return spin_pattern_projector([_PATTERN_SPIN[p] for p in self.pattern], layout)


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    一个完整的实验场景（SI 单位：rad/s、秒）
    - initial_phonons: 给出时从 Fock 态 |spins; phonons⟩ 出发；否则从 |spins⟩ ⊗ thermal(n̄) 出发
    - tau_grid: 跳跃时长 τ 的扫描网格，跳跃时段总长为 tau_grid[-1]
    - shots: 0 表示输出精确概率
    """
    name: str
    layout: HilbertLayout
    graph: HoppingGraph
    noise: NoiseModel
    tau_grid: np.ndarray
    prep: Tuple[PulseEvent, ...] = ()
    dd_pulses: Tuple[TimedPulse, ...] = ()
    mapping: Tuple[PulseEvent, ...] = ()
    observables: Tuple[Observable, ...] = ()
    shots: int = 0
    seed: int = 0
    dt_max: float = DEFAULT_DT_MAX
    initial_spins: Optional[Tuple[int, ...]] = None
    initial_phonons: Optional[Tuple[int, ...]] = None
    cutoff_tolerance: float = DEFAULT_CUTOFF_TOLERANCE
    description: str = ""
    figure: str = ""

    def __post_init__(self):
        grid = np.array(self.tau_grid, dtype=float)
        grid.setflags(write=False)
        object.__setattr__(self, "tau_grid", grid)
        for name in ("prep", "dd_pulses", "mapping", "observables"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def body_duration(self) -> float:
        return float(self.tau_grid[-1])

    @property
    def spins(self) -> Tuple[int, ...]:
        if self.initial_spins is None:
            return (SPIN_DOWN,) * self.layout.n_ions
        return tuple(self.initial_spins)

    def validate(self) -> None:
        """
        Raises:
            ScenarioValidationError: 任一场景不变量不成立（invariant 字段给出名称）
        """
        grid = self.tau_grid
        if grid.ndim != 1 or grid.size == 0:
            raise ScenarioValidationError("tau-grid-nonempty", "τ 网格不能为空")
        if grid[0] < 0:
            raise ScenarioValidationError("tau-grid-nonnegative", f"τ 网格起点为负: {grid[0]}")
        if np.any(np.diff(grid) <= 0):
            raise ScenarioValidationError("tau-grid-increasing", "τ 网格必须严格递增")
        if self.graph.n_ions != self.layout.n_ions:
            raise ScenarioValidationError(
                "graph-matches-layout", f"跳跃图有 {self.graph.n_ions} 个离子，布局有 {self.layout.n_ions} 个"
            )
        if self.shots < 0:
            raise ScenarioValidationError("shots-nonnegative", f"测量次数不能为负: {self.shots}")
        if self.seed < 0:
            raise ScenarioValidationError("seed-nonnegative", f"随机种子不能为负: {self.seed}")
        if self.dt_max <= 0:
            raise ScenarioValidationError("dt-max-positive", f"dt_max 必须为正: {self.dt_max}")
        if not 0 < self.cutoff_tolerance <= 1:
            raise ScenarioValidationError("cutoff-tolerance", f"截断容差必须在 (0, 1] 内: {self.cutoff_tolerance}")
        for pulse in (*self.prep, *self.mapping, *(p.event for p in self.dd_pulses)):
            if not 0 <= pulse.ion < self.layout.n_ions:
                raise ScenarioValidationError("pulse-ion-in-range", f"脉冲 {pulse.label} 引用了不存在的离子")
        for pulse in self.dd_pulses:
            if not 0 <= pulse.time <= self.body_duration:
                raise ScenarioValidationError(
                    "dd-within-body", f"DD 脉冲 {pulse.event.label} 的时刻 {pulse.time * 1e6:.3f} µs 不在跳跃时段内"
                )
        if not self.observables:
            raise ScenarioValidationError("observables-nonempty", "至少需要一个可观测量")
        labels = [obs.label for obs in self.observables]
        if len(set(labels)) != len(labels):
            raise ScenarioValidationError("observable-labels-unique", f"可观测量标签重复: {labels}")
        for obs in self.observables:
            size = len(obs.phonons if obs.phonons is not None else obs.pattern)
            if size != self.layout.n_ions:
                raise ScenarioValidationError("observable-size", f"{obs.label}: 需要 {self.layout.n_ions} 个分量")
            if obs.phonons is not None and not all(0 <= n < self.layout.fock_cutoff for n in obs.phonons):
                raise ScenarioValidationError(
                    "observable-within-cutoff", f"{obs.label}: 声子数必须在 [0, {self.layout.fock_cutoff}) 内"
                )
        if self.initial_phonons is not None and len(self.initial_phonons) != self.layout.n_ions:
            raise ScenarioValidationError("initial-state-size", "初始声子数个数与离子数不一致")
        if self.initial_phonons is not None and not all(0 <= n < self.layout.fock_cutoff for n in self.initial_phonons):
            raise ScenarioValidationError(
                "initial-state-within-cutoff", f"初始声子数 {list(self.initial_phonons)} 超出 [0, {self.layout.fock_cutoff})"
            )
        if len(self.spins) != self.layout.n_ions:
            raise ScenarioValidationError("initial-state-size", "初始自旋个数与离子数不一致")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """扫描结果：每个 τ 一行，每个可观测量一列（shots > 0 时为测量频率）"""
    times: np.ndarray
    columns: Dict[str, np.ndarray]
    shots: int = 0
    shot_counts: Optional[Dict[str, np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "columns", {label: np.asarray(v, dtype=float) for label, v in self.columns.items()})
        for label, values in self.columns.items():
            if len(values) != len(self.times):
                raise ScenarioValidationError("timeseries-shape", f"列 {label} 长度与时间轴不一致")
            if np.any(values < -PROBABILITY_TOL) or np.any(values > 1 + PROBABILITY_TOL):
                raise ScenarioValidationError("probability-range", f"列 {label} 存在超出 [0, 1] 的概率")

    @property
    def labels(self) -> List[str]:
        return list(self.columns)

    def column(self, label: str) -> np.ndarray:
        return self.columns[label]

    def at(self, tau: float, label: str, atol: float = 1e-12) -> float:
        """取时刻 tau（秒）处的值"""
        matches = np.flatnonzero(np.abs(self.times - tau) <= atol)
        if matches.size == 0:
            raise KeyError(f"τ = {tau * 1e6:.3f} µs 不在网格上")
        return float(self.columns[label][matches[0]])

    def row_sums(self) -> np.ndarray:
        return np.sum(np.stack(list(self.columns.values())), axis=0)


class ExperimentService:
    """实验流程服务"""

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or get_settings().workers

    # ---------- 制备 ----------

    def initial_state(
        self,
        layout: HilbertLayout,
        noise: NoiseModel,
        spins: Optional[Sequence[int]] = None,
        phonons: Optional[Sequence[int]] = None,
    ) -> QuantumState:
        """|spins⟩ ⊗ |phonons⟩；未给出声子数时各模式取热态 thermal(n̄)"""
        spins = list(spins) if spins is not None else [SPIN_DOWN] * layout.n_ions
        if phonons is not None:
            return layout.basis_state(spins, phonons)
        if noise.thermal_occupation == 0:
            return layout.basis_state(spins, [0] * layout.n_ions)

        weights = thermal_populations(noise.thermal_occupation, layout.fock_cutoff)
        joint = reduce(np.multiply.outer, [weights] * layout.n_ions)
        diagonal = np.zeros(layout.dim)
        for occupation in product(range(layout.fock_cutoff), repeat=layout.n_ions):
            diagonal[layout.basis_index(spins, occupation)] = joint[occupation]
        return QuantumState.density(np.diag(diagonal).astype(complex), layout)

    def apply_pulses(
        self,
        state: QuantumState,
        pulses: Sequence[PulseEvent],
        noise: NoiseModel,
        dt_max: float = DEFAULT_DT_MAX,
    ) -> QuantumState:
        """
        依次作用不含跳跃的脉冲；失效概率 ε 的脉冲写成凸组合 (1−ε)·E(ρ) + ε·ρ

        Raises:
            SiteRangeError: 脉冲引用了不存在的离子
        """
        layout = state.layout
        for pulse in pulses:
            layout.check_site(pulse.ion)
            segment = pulse.segment(layout, noise)
            epsilon = pulse.infidelity(noise)
            if segment.dissipative or epsilon > 0:
                state = state.to_density()
            evolved = SegmentEvolver(segment, dt_max).advance(state, segment.duration)
            state = QuantumState.mixture([(1.0 - epsilon, evolved), (epsilon, state)]) if epsilon > 0 else evolved
            logger.debug("脉冲 %s 完成（ε = %.3f）", pulse.label, epsilon)
        return state

    def prepare_state(
        self,
        prep: Sequence[PulseEvent],
        noise: NoiseModel,
        layout: HilbertLayout,
        initial: Optional[QuantumState] = None,
        dt_max: float = DEFAULT_DT_MAX,
    ) -> QuantumState:
        """从 |↓…↓⟩ ⊗ thermal(n̄)（或给定初态）出发依次作用制备脉冲"""
        state = initial if initial is not None else self.initial_state(layout, noise)
        return self.apply_pulses(state, prep, noise, dt_max)

    # ---------- 探测 ----------

    def detection_map(
        self,
        state: QuantumState,
        mapping: Sequence[PulseEvent],
        noise: Optional[NoiseModel] = None,
        dt_max: float = DEFAULT_DT_MAX,
    ) -> Dict[Tuple[str, ...], float]:
        """作用映射脉冲后，返回所有亮/暗构型的概率（|↓⟩ 为亮）"""
        mapped = self.apply_pulses(state, mapping, noise or NoiseModel(), dt_max)
        patterns = list(product((BRIGHT, DARK), repeat=state.layout.n_ions))
        projectors = [spin_pattern_projector([_PATTERN_SPIN[p] for p in pattern], state.layout) for pattern in patterns]
        return dict(zip(patterns, populations(mapped, projectors)))

    def mapped_observables(
        self,
        projectors: Sequence[Operator],
        mapping: Sequence[PulseEvent],
        noise: NoiseModel,
        layout: HilbertLayout,
        dt_max: float = DEFAULT_DT_MAX,
    ) -> np.ndarray:
        """
        把读出投影按映射通道回推（Heisenberg 绘景），得到 M†(P_k)
        与 detection_map 等价：Tr(P·M(ρ)) = Tr(M†(P)·ρ)
        """
        observables = np.stack([p.matrix for p in projectors]).astype(complex)
        for pulse in reversed(mapping):
            layout.check_site(pulse.ion)
            epsilon = pulse.infidelity(noise)
            evolved = evolve_observables(observables, pulse.segment(layout, noise), dt_max)
            observables = (1.0 - epsilon) * evolved + epsilon * observables
        return observables

    @staticmethod
    def sample_shots(probabilities: Sequence[float], shots: int, seed: int) -> np.ndarray:
        """
        多项分布采样：各概率对应一个结果，1 − Σp 为未计入的其余结果

        Raises:
            ScenarioValidationError: 概率为负、总和超过 1 或 shots < 1
        """
        p = np.asarray(probabilities, dtype=float)
        if shots < 1:
            raise ScenarioValidationError("shots-positive", f"采样次数必须 ≥ 1，当前: {shots}")
        if np.any(p < 0):
            raise ScenarioValidationError("probabilities-nonnegative", f"概率不能为负: {p.tolist()}")
        total = float(p.sum())
        if total > 1.0 + PROBABILITY_TOL:
            raise ScenarioValidationError("probabilities-sum", f"概率之和超过 1: {total:.12f}")
        p = p / max(total, 1.0)
        remainder = max(0.0, 1.0 - float(p.sum()))
        rng = np.random.default_rng(seed)
        counts = rng.multinomial(shots, np.append(p, remainder))
        return counts[:-1] / shots

    # ---------- 扫描 ----------

    def run_scenario(self, scenario: Scenario) -> TimeSeries:
        """
        对 τ 网格上的每个点：制备 → 跳跃（含 DD，超出 τ 的部分截断）→ 映射 → 探测

        Raises:
            ScenarioValidationError: 场景不变量不成立，或可观测量不互斥（采样模式）
            ScheduleConflictError: 同一离子上的 DD 脉冲重叠
            FockCutoffError: 截断边界布居超过 cutoff_tolerance
        """
        scenario.validate()
        started = time.perf_counter()
        layout = scenario.layout
        logger.info(
            "运行场景 %s：%d 个 τ 点，维度 %d，%d 个工作线程",
            scenario.name, scenario.tau_grid.size, layout.dim, self.workers,
        )

        projectors = [obs.projector(layout) for obs in scenario.observables]
        if scenario.shots > 0:
            self._check_exclusive(scenario.observables, projectors)

        initial = self.initial_state(layout, scenario.noise, scenario.spins, scenario.initial_phonons)
        prepared = self.prepare_state(scenario.prep, scenario.noise, layout, initial, scenario.dt_max)
        body = compile_body(scenario.graph, scenario.dd_pulses, scenario.body_duration, scenario.noise, layout)
        trajectory = run_schedule(prepared, body, scenario.tau_grid, scenario.dt_max)
        self._check_cutoff(scenario, [prepared, *trajectory.states])

        readout = self.mapped_observables(projectors, scenario.mapping, scenario.noise, layout, scenario.dt_max)

        def evaluate(index: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
            exact = _expectations(readout, trajectory.states[index])
            if scenario.shots == 0:
                return exact, None
            frequencies = self.sample_shots(exact, scenario.shots, scenario.seed ^ index)
            return frequencies, np.rint(frequencies * scenario.shots).astype(int)

        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            rows = list(executor.map(evaluate, range(scenario.tau_grid.size)))

        values = np.array([row[0] for row in rows])
        labels = [obs.label for obs in scenario.observables]
        columns = {label: values[:, k] for k, label in enumerate(labels)}
        shot_counts = None
        if scenario.shots > 0:
            counts = np.array([row[1] for row in rows])
            shot_counts = {label: counts[:, k] for k, label in enumerate(labels)}

        logger.info("场景 %s 完成，耗时 %.2f s", scenario.name, time.perf_counter() - started)
        return TimeSeries(times=scenario.tau_grid, columns=columns, shots=scenario.shots, shot_counts=shot_counts)

    @staticmethod
    def _check_exclusive(observables: Sequence[Observable], projectors: Sequence[Operator]) -> None:
        for i, j in ((i, j) for i in range(len(projectors)) for j in range(i + 1, len(projectors))):
            if np.abs(projectors[i].matrix @ projectors[j].matrix).max() > 1e-12:
                raise ScenarioValidationError(
                    "observables-exclusive",
                    f"采样模式要求可观测量互斥: {observables[i].label} 与 {observables[j].label} 重叠",
                )

    @staticmethod
    def _check_cutoff(scenario: Scenario, states: Sequence[QuantumState]) -> None:
        worst = max(scenario.layout.boundary_population(state) for state in states)
        if worst > scenario.cutoff_tolerance:
            raise FockCutoffError(
                f"场景 {scenario.name}: 截断能级 |{scenario.layout.fock_cutoff - 1}⟩ 上的布居 {worst:.3e} "
                f"超过容差 {scenario.cutoff_tolerance:.1e}，请增大 fock_cutoff"
            )
        logger.debug("截断边界最大布居 %.3e", worst)


def _expectations(observables: np.ndarray, state: QuantumState) -> np.ndarray:
    """Tr(A_k ρ)（或 ⟨ψ|A_k|ψ⟩），截断到 [0, 1]"""
    if state.is_pure:
        values = np.einsum("i,kij,j->k", state.data.conj(), observables, state.data).real
    else:
        values = np.einsum("kij,ji->k", observables, state.data).real
    if np.any(values < -PROBABILITY_TOL) or np.any(values > 1 + PROBABILITY_TOL):
        raise ScenarioValidationError("probability-range", f"读出概率超出 [0, 1]: {values.tolist()}")
    return values.clip(0.0, 1.0)


experiment_service = ExperimentService()
