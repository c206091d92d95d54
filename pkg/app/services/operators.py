"""
算符代数服务
在截断的 自旋⊗Fock 希尔伯特空间上做稠密复矩阵运算：基本算符、张量嵌入、矩阵指数、期望值

张量顺序（全局唯一约定）：
    全空间 = (spin_0 ⊗ mode_0) ⊗ (spin_1 ⊗ mode_1) ⊗ …
    自旋基矢顺序 (|↓⟩, |↑⟩)，Fock 基矢按 n 递增
    单个离子位点内的下标 = spin * d + n
所有多体算符都通过 embed 构造，调用方不手工排列 Kronecker 因子。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, reduce
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.exceptions import (
    InvalidDimensionError,
    OperatorValidationError,
    SiteRangeError,
    StateValidationError,
)

SPIN_DOWN = 0
SPIN_UP = 1

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
PURE_NORM_TOL = 1e-9
DENSITY_TRACE_TOL = 1e-8
DENSITY_HERMITIAN_TOL = 1e-10
DENSITY_POSITIVITY_TOL = 1e-8
PROJECTOR_TOL = 1e-10
PROBABILITY_TOL = 1e-9


class Factor(str, Enum):
    """单个离子位点上的张量因子"""
    SPIN = "spin"
    MODE = "mode"


@dataclass(frozen=True)
class HilbertLayout:
    """希尔伯特空间布局：离子数 + 每个模式的 Fock 截断维度 d（能级 |0⟩..|d-1⟩）"""
    n_ions: int
    fock_cutoff: int

    def __post_init__(self):
        if self.n_ions < 1:
            raise InvalidDimensionError(f"离子数必须为正整数，当前: {self.n_ions}")
        if self.fock_cutoff < 2:
            raise InvalidDimensionError(f"Fock 截断维度至少为 2（边带跃迁需要 |0⟩,|1⟩），当前: {self.fock_cutoff}")

    @property
    def site_dim(self) -> int:
        return 2 * self.fock_cutoff

    @property
    def dim(self) -> int:
        """总维度 (2d)^n_ions"""
        return self.site_dim ** self.n_ions

    def factor_dim(self, factor: Factor) -> int:
        return 2 if Factor(factor) is Factor.SPIN else self.fock_cutoff

    def check_site(self, site: int) -> None:
        if not 0 <= site < self.n_ions:
            raise SiteRangeError(f"离子编号越界: {site}（共 {self.n_ions} 个离子）")

    @cached_property
    def spin_labels(self) -> np.ndarray:
        """形状 (dim, n_ions)：每个基矢上各离子的自旋（0=↓, 1=↑）"""
        return self._site_labels // self.fock_cutoff

    @cached_property
    def phonon_labels(self) -> np.ndarray:
        """形状 (dim, n_ions)：每个基矢上各模式的声子数"""
        return self._site_labels % self.fock_cutoff

    @cached_property
    def _site_labels(self) -> np.ndarray:
        indices = np.unravel_index(np.arange(self.dim), (self.site_dim,) * self.n_ions)
        return np.stack(indices, axis=1)

    def basis_index(self, spins: Sequence[int], phonons: Sequence[int]) -> int:
        """乘积基矢 |s_0,n_0⟩⊗|s_1,n_1⟩⊗… 在全空间中的下标"""
        if len(spins) != self.n_ions or len(phonons) != self.n_ions:
            raise InvalidDimensionError(f"需要 {self.n_ions} 个自旋和 {self.n_ions} 个声子数")
        index = 0
        for spin, n in zip(spins, phonons):
            if spin not in (SPIN_DOWN, SPIN_UP):
                raise InvalidDimensionError(f"自旋只能是 0(↓) 或 1(↑)，当前: {spin}")
            if not 0 <= n < self.fock_cutoff:
                raise InvalidDimensionError(f"声子数 {n} 超出截断 d={self.fock_cutoff}")
            index = index * self.site_dim + spin * self.fock_cutoff + n
        return index

    def basis_state(self, spins: Sequence[int], phonons: Sequence[int]) -> "QuantumState":
        vector = np.zeros(self.dim, dtype=complex)
        vector[self.basis_index(spins, phonons)] = 1.0
        return QuantumState.pure(vector, self)

    def identity(self) -> "Operator":
        return Operator(np.eye(self.dim, dtype=complex), self, hermitian=True, unitary=True)

    def boundary_population(self, state: "QuantumState") -> float:
        """所有模式中，截断边界能级 |d-1⟩ 上布居的最大值"""
        probabilities = state.basis_probabilities()
        at_boundary = self.phonon_labels == self.fock_cutoff - 1
        return float(max(probabilities[at_boundary[:, k]].sum() for k in range(self.n_ions)))


@dataclass(frozen=True, eq=False)
class Operator:
    """
    稠密复矩阵算符

    hermitian / unitary 标志在构造时校验：
    - 厄米: ‖A − A†‖_max < 1e-12（按矩阵范数缩放）
    - 幺正: ‖U†U − I‖_max < 1e-10
    """
    matrix: np.ndarray
    layout: Optional[HilbertLayout] = None
    hermitian: bool = False
    unitary: bool = False

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise OperatorValidationError(f"算符必须是方阵，当前形状: {matrix.shape}")
        if self.layout is not None and matrix.shape[0] != self.layout.dim:
            raise OperatorValidationError(
                f"算符维度 {matrix.shape[0]} 与布局维度 {self.layout.dim} 不一致"
            )
        if self.hermitian:
            scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
            if np.abs(matrix - matrix.conj().T).max(initial=0.0) >= HERMITIAN_TOL * scale:
                raise OperatorValidationError("标记为厄米的算符不满足 A = A†")
        if self.unitary:
            defect = matrix.conj().T @ matrix - np.eye(matrix.shape[0])
            if np.abs(defect).max(initial=0.0) >= UNITARY_TOL:
                raise OperatorValidationError("标记为幺正的算符不满足 U†U = I")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.layout, hermitian=self.hermitian, unitary=self.unitary)

    def commutator(self, other: "Operator") -> "Operator":
        return Operator(self.matrix @ other.matrix - other.matrix @ self.matrix, self.layout)

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(
            self.matrix @ other.matrix,
            self.layout,
            unitary=self.unitary and other.unitary,
        )

    def __add__(self, other: "Operator") -> "Operator":
        return Operator(
            self.matrix + other.matrix,
            self.layout,
            hermitian=self.hermitian and other.hermitian,
        )

    def __sub__(self, other: "Operator") -> "Operator":
        return Operator(
            self.matrix - other.matrix,
            self.layout,
            hermitian=self.hermitian and other.hermitian,
        )

    def __neg__(self) -> "Operator":
        return Operator(-self.matrix, self.layout, hermitian=self.hermitian)

    def __mul__(self, scalar: complex) -> "Operator":
        real = np.isrealobj(scalar) or np.imag(scalar) == 0
        return Operator(scalar * self.matrix, self.layout, hermitian=self.hermitian and real)

    __rmul__ = __mul__

    def allclose(self, other: "Operator", atol: float = 1e-10) -> bool:
        return bool(np.abs(self.matrix - other.matrix).max(initial=0.0) < atol)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """纯态矢量或密度矩阵"""
    kind: Literal["pure", "density"]
    data: np.ndarray
    layout: HilbertLayout

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        dim = self.layout.dim
        if self.kind == "pure":
            if data.shape != (dim,):
                raise StateValidationError(f"纯态矢量维度应为 {dim}，当前: {data.shape}")
            norm = float(np.vdot(data, data).real)
            if abs(norm - 1.0) >= PURE_NORM_TOL:
                raise StateValidationError(f"纯态未归一化: ⟨ψ|ψ⟩ = {norm:.12f}")
        elif self.kind == "density":
            if data.shape != (dim, dim):
                raise StateValidationError(f"密度矩阵维度应为 {dim}×{dim}，当前: {data.shape}")
            trace = np.trace(data)
            if abs(trace - 1.0) >= DENSITY_TRACE_TOL:
                raise StateValidationError(f"密度矩阵迹不为 1: Tr ρ = {trace.real:.12f}")
            if np.abs(data - data.conj().T).max() >= DENSITY_HERMITIAN_TOL:
                raise StateValidationError("密度矩阵不是厄米的")
            data = 0.5 * (data + data.conj().T)
            min_eigenvalue = float(linalg.eigvalsh(data)[0])
            if min_eigenvalue <= -DENSITY_POSITIVITY_TOL:
                raise StateValidationError(f"密度矩阵不是半正定的: 最小本征值 {min_eigenvalue:.3e}")
        else:
            raise StateValidationError(f"未知的态类型: {self.kind}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def pure(cls, vector: np.ndarray, layout: HilbertLayout, normalize: bool = False) -> "QuantumState":
        vector = np.asarray(vector, dtype=complex)
        if normalize:
            vector = vector / np.linalg.norm(vector)
        return cls("pure", vector, layout)

    @classmethod
    def density(cls, rho: np.ndarray, layout: HilbertLayout) -> "QuantumState":
        return cls("density", rho, layout)

    @classmethod
    def mixture(cls, weighted: Sequence[Tuple[float, "QuantumState"]]) -> "QuantumState":
        """凸组合 Σ w_i ρ_i（权重之和为 1）"""
        layout = weighted[0][1].layout
        rho = sum(weight * state.to_density().data for weight, state in weighted)
        return cls.density(rho, layout)

    @property
    def is_pure(self) -> bool:
        return self.kind == "pure"

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        return QuantumState.density(np.outer(self.data, self.data.conj()), self.layout)

    def basis_probabilities(self) -> np.ndarray:
        """计算基（乘积基）上的布居分布"""
        if self.kind == "pure":
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).clip(min=0.0)

    def expectation(self, op: Operator) -> complex:
        if self.kind == "pure":
            return complex(np.vdot(self.data, op.matrix @ self.data))
        return complex(np.trace(op.matrix @ self.data))

    def apply(self, unitary: Operator) -> "QuantumState":
        """作用幺正算符：|ψ⟩ → U|ψ⟩ 或 ρ → UρU†"""
        if self.kind == "pure":
            return QuantumState.pure(unitary.matrix @ self.data, self.layout)
        u = unitary.matrix
        return QuantumState.density(u @ self.data @ u.conj().T, self.layout)


def annihilation(d: int) -> Operator:
    """
    截断空间上的湮灭算符：a[n-1, n] = √n

    Raises:
        InvalidDimensionError: d < 2
    """
    if d < 2:
        raise InvalidDimensionError(f"Fock 维度至少为 2，当前: {d}")
    return Operator(np.diag(np.sqrt(np.arange(1, d)), k=1))


def creation(d: int) -> Operator:
    return annihilation(d).dag()


def number_operator(d: int) -> Operator:
    return Operator(np.diag(np.arange(d, dtype=float)), hermitian=True)


def spin_ops() -> Tuple[Operator, Operator, Operator]:
    """σ⁺ = |↑⟩⟨↓|, σ⁻ = |↓⟩⟨↑|, σ_z = |↑⟩⟨↑| − |↓⟩⟨↓|（基矢顺序 |↓⟩, |↑⟩）"""
    sigma_plus = np.zeros((2, 2), dtype=complex)
    sigma_plus[SPIN_UP, SPIN_DOWN] = 1.0
    sigma_z = np.diag([-1.0, 1.0])
    return (
        Operator(sigma_plus),
        Operator(sigma_plus.conj().T),
        Operator(sigma_z, hermitian=True, unitary=True),
    )


def embed(op: Operator, site: int, factor: Factor, layout: HilbertLayout) -> Operator:
    """
    把单个自旋或模式上的算符提升到全空间（其余因子取单位阵）

    Raises:
        SiteRangeError: 离子编号越界
        OperatorValidationError: 算符维度与因子不符
    """
    factor = Factor(factor)
    layout.check_site(site)
    expected = layout.factor_dim(factor)
    if op.dim != expected:
        raise OperatorValidationError(f"{factor.value} 因子需要 {expected} 维算符，当前: {op.dim}")

    factors: List[np.ndarray] = []
    for ion in range(layout.n_ions):
        spin_factor = np.eye(2)
        mode_factor = np.eye(layout.fock_cutoff)
        if ion == site:
            if factor is Factor.SPIN:
                spin_factor = op.matrix
            else:
                mode_factor = op.matrix
        factors.extend([spin_factor, mode_factor])
    return Operator(reduce(np.kron, factors), layout, hermitian=op.hermitian, unitary=op.unitary)


def mode_operators(site: int, layout: HilbertLayout) -> Tuple[Operator, Operator]:
    """第 site 个局域模式的 (a, a†)"""
    a = embed(annihilation(layout.fock_cutoff), site, Factor.MODE, layout)
    return a, a.dag()


def spin_operators(site: int, layout: HilbertLayout) -> Tuple[Operator, Operator, Operator]:
    """第 site 个离子的 (σ⁺, σ⁻, σ_z)"""
    return tuple(embed(op, site, Factor.SPIN, layout) for op in spin_ops())


def total_number(layout: HilbertLayout) -> Operator:
    """N_total = Σ a_i† a_i"""
    n = number_operator(layout.fock_cutoff)
    return reduce(
        lambda acc, site: acc + embed(n, site, Factor.MODE, layout),
        range(1, layout.n_ions),
        embed(n, 0, Factor.MODE, layout),
    )


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """厄米算符的本征分解，用于对同一哈密顿量反复计算 exp(-iHt)"""
    energies: np.ndarray
    vectors: np.ndarray
    layout: Optional[HilbertLayout] = field(default=None)

    @classmethod
    def of(cls, hamiltonian: Operator) -> "Eigensystem":
        if not hamiltonian.hermitian:
            raise OperatorValidationError("传播子只接受标记为厄米的哈密顿量")
        energies, vectors = linalg.eigh(hamiltonian.matrix)
        return cls(energies, vectors, hamiltonian.layout)

    def unitary_matrix(self, t: float) -> np.ndarray:
        phases = np.exp(-1j * self.energies * t)
        return (self.vectors * phases) @ self.vectors.conj().T

    def propagator(self, t: float) -> Operator:
        return Operator(self.unitary_matrix(t), self.layout, unitary=True)


def propagator(hamiltonian: Operator, t: float) -> Operator:
    """
    U = exp(-iHt)，通过厄米本征分解计算（负 t 即时间反演传播子）

    Raises:
        OperatorValidationError: 哈密顿量未标记为厄米
    """
    if not np.isfinite(t):
        raise OperatorValidationError(f"演化时间必须是有限值，当前: {t}")
    return Eigensystem.of(hamiltonian).propagator(t)


def _check_projector(projector: Operator) -> None:
    p = projector.matrix
    scale = max(1.0, float(np.abs(p).max(initial=0.0)))
    if np.abs(p - p.conj().T).max(initial=0.0) >= PROJECTOR_TOL * scale:
        raise OperatorValidationError("投影算符必须是厄米的")
    if np.abs(p @ p - p).max(initial=0.0) >= PROJECTOR_TOL * scale:
        raise OperatorValidationError("投影算符必须满足 P² = P")


def populations(state: QuantumState, projectors: Sequence[Operator]) -> List[float]:
    """
    p_i = ⟨ψ|P_i|ψ⟩ 或 Tr(P_i ρ)，输出截断到 [0, 1]

    Raises:
        OperatorValidationError: 输入不是投影算符，或概率超出 [-1e-9, 1+1e-9]
    """
    result = []
    for projector in projectors:
        _check_projector(projector)
        value = state.expectation(projector).real
        if not -PROBABILITY_TOL <= value <= 1.0 + PROBABILITY_TOL:
            raise OperatorValidationError(f"布居 {value:.3e} 超出 [0, 1]")
        result.append(min(1.0, max(0.0, value)))
    return result


def diagonal_projector(mask: np.ndarray, layout: HilbertLayout) -> Operator:
    """由计算基上的布尔掩码构造对角投影算符"""
    return Operator(np.diag(mask.astype(float)), layout, hermitian=True)


def occupation_projector(phonons: Sequence[int], layout: HilbertLayout) -> Operator:
    """声子占据数投影（对自旋求和），例如 P_10 = Σ_s |s,1;s',0⟩⟨…|"""
    if len(phonons) != layout.n_ions:
        raise InvalidDimensionError(f"需要 {layout.n_ions} 个声子数，当前: {list(phonons)}")
    mask = np.all(layout.phonon_labels == np.asarray(phonons), axis=1)
    return diagonal_projector(mask, layout)


def spin_pattern_projector(spins: Sequence[int], layout: HilbertLayout) -> Operator:
    """自旋构型投影（对声子求和）"""
    if len(spins) != layout.n_ions:
        raise InvalidDimensionError(f"需要 {layout.n_ions} 个自旋，当前: {list(spins)}")
    mask = np.all(layout.spin_labels == np.asarray(spins), axis=1)
    return diagonal_projector(mask, layout)
