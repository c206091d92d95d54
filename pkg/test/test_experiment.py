"""
实验流程测试

测试内容：
1. 初态与制备脉冲（含失效概率 ε）
2. 亮/暗探测映射，以及 Heisenberg 回推与之等价
3. 有限次测量采样：确定性、边界、均值
4. 场景扫描：自由跳跃、相移回波、并行线程数无关性
5. 场景不变量：截断容差、采样模式互斥、网格、声子数范围
6. 无噪声 fig5b / fig6b 有限时长脉冲回波；大量测量与步长减半的收敛
"""
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.exceptions import FockCutoffError, ScenarioValidationError, SiteRangeError
from app.models.scenario import ScenarioOverrides
from app.services.dynamics import NoiseModel
from app.services.experiment import (
    BRIGHT,
    DARK,
    ExperimentService,
    Observable,
    Scenario,
    TimeSeries,
)
from app.services.hamiltonian import HoppingGraph
from app.services.operators import (
    SPIN_DOWN,
    SPIN_UP,
    HilbertLayout,
    QuantumState,
    spin_pattern_projector,
)
from app.services.presets import load_preset_file, preset
from app.services.schedule import PulseEvent

KHZ = 2 * math.pi * 1e3
US = 1e-6


def _bsb_pi(ion, rabi_khz=40.0):
    return PulseEvent(kind="bsb", ion=ion, area=math.pi, rabi=rabi_khz * KHZ)


class TestPreparation:
    """测试初态与制备"""

    def setup_method(self):
        self.service = ExperimentService(workers=1)
        self.layout = HilbertLayout(1, 3)

    def test_empty_prep_returns_initial(self):
        state = self.service.prepare_state([], NoiseModel(), self.layout)
        assert state.is_pure
        assert np.allclose(state.data, self.layout.basis_state([SPIN_DOWN], [0]).data)

    def test_thermal_initial_state(self):
        layout = HilbertLayout(2, 3)
        state = self.service.initial_state(layout, NoiseModel(thermal_occupation=0.04))
        assert not state.is_pure
        probabilities = state.basis_probabilities()
        w0 = 1.0 / (1.0 + 0.04 / 1.04 + (0.04 / 1.04) ** 2)
        assert probabilities[layout.basis_index([SPIN_DOWN, SPIN_DOWN], [0, 0])] == pytest.approx(w0 ** 2)
        assert probabilities.sum() == pytest.approx(1.0)

    def test_fock_initial_state(self):
        layout = HilbertLayout(2, 3)
        state = self.service.initial_state(layout, NoiseModel(thermal_occupation=0.04), phonons=[1, 0])
        assert state.is_pure
        assert state.basis_probabilities()[layout.basis_index([SPIN_DOWN, SPIN_DOWN], [1, 0])] == pytest.approx(1.0)

    def test_bsb_pi_with_infidelity(self):
        """ε = 0.08：92% 到达 |↑,1⟩，8% 留在 |↓,0⟩"""
        noise = NoiseModel(prep_infidelity=0.08)
        state = self.service.prepare_state([_bsb_pi(0)], noise, self.layout)
        probabilities = state.basis_probabilities()
        assert probabilities[self.layout.basis_index([SPIN_UP], [1])] == pytest.approx(0.92, abs=1e-9)
        assert probabilities[self.layout.basis_index([SPIN_DOWN], [0])] == pytest.approx(0.08, abs=1e-9)

    def test_pulse_on_missing_ion(self):
        with pytest.raises(SiteRangeError):
            self.service.prepare_state([_bsb_pi(3)], NoiseModel(), self.layout)


class TestDetection:
    """测试亮/暗探测"""

    def setup_method(self):
        self.service = ExperimentService(workers=1)
        self.layout = HilbertLayout(2, 3)
        self.mapping = [_bsb_pi(0), _bsb_pi(1)]

    def test_no_mapping_all_bright(self):
        state = self.layout.basis_state([SPIN_DOWN, SPIN_DOWN], [0, 0])
        result = self.service.detection_map(state, [])
        assert result[(BRIGHT, BRIGHT)] == pytest.approx(1.0)
        assert sum(result.values()) == pytest.approx(1.0)

    def test_phonon_position_maps_to_bright_ion(self):
        """|↑,1;↑,0⟩ 经蓝边带 π 映射后离子 1 亮、离子 2 暗"""
        state = self.layout.basis_state([SPIN_UP, SPIN_UP], [1, 0])
        result = self.service.detection_map(state, self.mapping)
        assert result[(BRIGHT, DARK)] == pytest.approx(1.0, abs=1e-9)
        mirrored = self.layout.basis_state([SPIN_UP, SPIN_UP], [0, 1])
        assert self.service.detection_map(mirrored, self.mapping)[(DARK, BRIGHT)] == pytest.approx(1.0, abs=1e-9)

    def test_heisenberg_readout_matches_detection_map(self):
        noise = NoiseModel(dephasing_sideband=4.433 * KHZ, prep_infidelity=0.08)
        rng = np.random.default_rng(3)
        vector = rng.normal(size=self.layout.dim) + 1j * rng.normal(size=self.layout.dim)
        state = QuantumState.pure(vector, self.layout, normalize=True).to_density()
        dt_max = 0.02 * US
        forward = self.service.detection_map(state, self.mapping, noise, dt_max)
        patterns = [(BRIGHT, DARK), (DARK, BRIGHT)]
        projectors = [
            spin_pattern_projector([SPIN_DOWN if p == BRIGHT else SPIN_UP for p in pattern], self.layout)
            for pattern in patterns
        ]
        readout = self.service.mapped_observables(projectors, self.mapping, noise, self.layout, dt_max)
        backward = [np.trace(obs @ state.data).real for obs in readout]
        assert backward == pytest.approx([forward[p] for p in patterns], abs=1e-8)


class TestSampleShots:
    """测试测量采样"""

    def test_deterministic_for_seed(self):
        a = ExperimentService.sample_shots([0.3, 0.5], 50, seed=11)
        b = ExperimentService.sample_shots([0.3, 0.5], 50, seed=11)
        assert np.array_equal(a, b)

    def test_certain_outcome(self):
        assert list(ExperimentService.sample_shots([1.0, 0.0], 50, seed=0)) == [1.0, 0.0]

    def test_frequencies_are_multiples_of_one_over_shots(self):
        frequencies = ExperimentService.sample_shots([0.3, 0.5], 50, seed=2)
        assert np.allclose(frequencies * 50, np.rint(frequencies * 50))
        assert frequencies.sum() <= 1.0

    def test_mean_converges(self):
        means = np.mean([ExperimentService.sample_shots([0.3], 50, seed) for seed in range(1000)], axis=0)
        assert means[0] == pytest.approx(0.3, abs=0.01)

    def test_shot_noise_matches_binomial(self):
        """50 次测量、200 个种子：标准差与 √(p(1−p)/50) 相差不超过 20%"""
        p = 0.3
        samples = [ExperimentService.sample_shots([p], 50, seed)[0] for seed in range(200)]
        assert np.std(samples, ddof=1) == pytest.approx(math.sqrt(p * (1 - p) / 50), rel=0.2)

    def test_invalid_inputs(self):
        with pytest.raises(ScenarioValidationError):
            ExperimentService.sample_shots([-0.1, 0.5], 50, 0)
        with pytest.raises(ScenarioValidationError):
            ExperimentService.sample_shots([0.7, 0.5], 50, 0)
        with pytest.raises(ScenarioValidationError):
            ExperimentService.sample_shots([0.5], 0, 0)


class TestRunScenario:
    """测试场景扫描"""

    def setup_method(self):
        self.service = ExperimentService(workers=2)

    def test_free_hopping(self):
        scenario = preset("fig2a", ScenarioOverrides(tau_step_us=62.5))
        series = self.service.run_scenario(scenario)
        assert series.at(250 * US, "P01") == pytest.approx(1.0, abs=1e-9)
        assert series.at(125 * US, "P01") == pytest.approx(0.5, abs=1e-9)
        assert series.at(62.5 * US, "P01") == pytest.approx(math.sin(math.pi / 8) ** 2, abs=1e-9)
        assert np.allclose(series.row_sums(), 1.0)

    def test_phase_shift_revival(self):
        series = self.service.run_scenario(preset("fig2b", ScenarioOverrides(tau_step_us=62.5)))
        assert series.at(125 * US, "P10") >= 0.999
        assert series.at(62.5 * US, "P10") == pytest.approx(math.cos(math.pi / 8) ** 2, abs=1e-9)

    def test_two_phonon_revival(self):
        series = self.service.run_scenario(preset("fig3b", ScenarioOverrides(tau_step_us=62.5)))
        assert series.at(125 * US, "P20") >= 0.999

    def test_sideband_echo(self):
        series = self.service.run_scenario(preset("fig4b", ScenarioOverrides(tau_step_us=145)))
        assert series.at(145 * US, "P10") >= 0.95

    def test_worker_count_does_not_change_result(self):
        overrides = ScenarioOverrides(tau_step_us=100, dt_max_us=0.05)
        one = ExperimentService(workers=1).run_scenario(preset("fig5b", overrides))
        four = ExperimentService(workers=4).run_scenario(preset("fig5b", overrides))
        for label in one.labels:
            assert np.array_equal(one.column(label), four.column(label))
            assert np.array_equal(one.shot_counts[label], four.shot_counts[label])
        assert one.shots == 50

    def test_many_shots_converge_to_exact(self):
        exact = self.service.run_scenario(preset("fig5b", ScenarioOverrides(tau_step_us=100, shots=0)))
        sampled = self.service.run_scenario(preset("fig5b", ScenarioOverrides(tau_step_us=100, shots=10_000)))
        for label in exact.labels:
            assert np.max(np.abs(sampled.column(label) - exact.column(label))) < 0.02

    def test_exact_mode_converged_in_step(self):
        """精确模式下步长减半，各列变化小于 1e-6"""
        coarse = self.service.run_scenario(preset("fig5b", ScenarioOverrides(tau_step_us=100, shots=0, dt_max_us=0.01)))
        fine = self.service.run_scenario(preset("fig5b", ScenarioOverrides(tau_step_us=100, shots=0, dt_max_us=0.005)))
        for label in coarse.labels:
            assert np.max(np.abs(coarse.column(label) - fine.column(label))) < 1e-6

    def test_exact_mode_has_no_counts(self):
        series = self.service.run_scenario(preset("fig2a", ScenarioOverrides(tau_step_us=250)))
        assert series.shots == 0
        assert series.shot_counts is None

    def test_cutoff_guard(self):
        scenario_file = load_preset_file("fig3a").model_copy(update={"fock_cutoff": 3})
        with pytest.raises(FockCutoffError):
            self.service.run_scenario(scenario_file.to_scenario())

    def test_sampling_requires_exclusive_observables(self):
        layout = HilbertLayout(2, 3)
        scenario = Scenario(
            name="overlap",
            layout=layout,
            graph=HoppingGraph.two_ion(2 * KHZ),
            noise=NoiseModel(),
            tau_grid=[0.0, 10 * US],
            observables=[
                Observable("P10", phonons=(1, 0)),
                Observable("BB", pattern=(BRIGHT, BRIGHT)),
            ],
            shots=10,
            initial_phonons=(1, 0),
        )
        with pytest.raises(ScenarioValidationError) as exc:
            self.service.run_scenario(scenario)
        assert exc.value.invariant == "observables-exclusive"


class TestScenarioValidation:
    """测试场景不变量"""

    def _scenario(self, **kwargs):
        fields = dict(
            name="t",
            layout=HilbertLayout(2, 3),
            graph=HoppingGraph.two_ion(2 * KHZ),
            noise=NoiseModel(),
            tau_grid=[0.0, 10 * US],
            observables=[Observable("P10", phonons=(1, 0))],
        )
        fields.update(kwargs)
        return Scenario(**fields)

    def test_valid(self):
        self._scenario().validate()

    @pytest.mark.parametrize("kwargs,invariant", [
        ({"tau_grid": []}, "tau-grid-nonempty"),
        ({"tau_grid": [10 * US, 5 * US]}, "tau-grid-increasing"),
        ({"tau_grid": [-1 * US, 5 * US]}, "tau-grid-nonnegative"),
        ({"shots": -1}, "shots-nonnegative"),
        ({"observables": []}, "observables-nonempty"),
        ({"observables": [Observable("A", phonons=(1, 0)), Observable("A", phonons=(0, 1))]},
         "observable-labels-unique"),
        ({"observables": [Observable("P30", phonons=(3, 0))]}, "observable-within-cutoff"),
        ({"observables": [Observable("Pneg", phonons=(-1, 0))]}, "observable-within-cutoff"),
        ({"initial_phonons": (3, 0)}, "initial-state-within-cutoff"),
        ({"initial_phonons": (-1, 0)}, "initial-state-within-cutoff"),
        ({"observables": [Observable("P1", phonons=(1,))]}, "observable-size"),
        ({"prep": [_bsb_pi(2)]}, "pulse-ion-in-range"),
        ({"graph": HoppingGraph.from_pairs(3, {(0, 1): 1.0})}, "graph-matches-layout"),
    ])
    def test_invariants(self, kwargs, invariant):
        with pytest.raises(ScenarioValidationError) as exc:
            self._scenario(**kwargs).validate()
        assert exc.value.invariant == invariant


class TestTimeSeries:
    """测试结果时间序列"""

    def test_lookup(self):
        series = TimeSeries(times=[0.0, 1e-6], columns={"P10": [1.0, 0.5]})
        assert series.at(1e-6, "P10") == 0.5
        assert series.labels == ["P10"]
        with pytest.raises(KeyError):
            series.at(2e-6, "P10")

    def test_probability_range(self):
        with pytest.raises(ScenarioValidationError):
            TimeSeries(times=[0.0], columns={"P10": [1.5]})

    def test_shape(self):
        with pytest.raises(ScenarioValidationError):
            TimeSeries(times=[0.0, 1.0], columns={"P10": [1.0]})


IDEAL_NOISE = {
    "dephasing_carrier_khz": 0.0,
    "dephasing_sideband_khz": 0.0,
    "prep_infidelity": 0.0,
    "carrier_infidelity": 0.0,
    "thermal_occupation": 0.0,
}


class TestFinitePulseRevival:
    """测试无噪声时有限时长蓝边带 2π 脉冲的回波（fig5b / fig6b 序列）"""

    def setup_method(self):
        self.service = ExperimentService(workers=2)

    def _run(self, name, stop_us, step_us):
        scenario_file = load_preset_file(name).with_overlay({
            "noise": IDEAL_NOISE,
            "shots": 0,
            "tau_grid": [{"start_us": 0, "stop_us": stop_us, "step_us": step_us}],
        })
        return self.service.run_scenario(scenario_file.to_scenario())

    def test_single_pulse(self):
        """100 µs 处的 25 µs 脉冲：回波在 2·100 + 25 = 225 µs"""
        series = self._run("fig5b", 225, 225)
        assert series.at(0.0, "P10") == pytest.approx(1.0, abs=1e-9)
        assert series.at(225 * US, "P10") >= 0.95

    def test_pulse_train(self):
        """50、175、300、425 µs 四个脉冲：每个脉冲结束 50 µs 后回波"""
        series = self._run("fig6b", 500, 125)
        for tau in (125, 250, 375, 500):
            assert series.at(tau * US, "P10") >= 0.95
