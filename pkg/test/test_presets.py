"""
预设场景与场景文件模型测试

测试内容：
1. 8 个预设均可加载并通过场景校验
2. 关键物理参数（κ、χ/κ、DD 时刻、分段网格）
3. 覆盖 / 叠加文件 / 内容摘要
4. 场景文件字段校验
"""
import math
import os
import sys

import numpy as np
import pytest
from pydantic import ValidationError

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.exceptions import ScenarioValidationError, UnknownPresetError
from app.models.scenario import KHZ, US, GridRange, ScenarioFile, ScenarioOverrides
from app.services.presets import PRESET_NAMES, list_presets, load_preset_file, preset


class TestPresetCatalog:
    """测试预设目录"""

    def test_all_presets_load(self):
        assert PRESET_NAMES == ("fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig5b", "fig6b")
        for name in PRESET_NAMES:
            scenario = preset(name)
            assert scenario.name == name
            assert scenario.figure.startswith("Fig.")

    def test_list_presets(self):
        assert [f.name for f in list_presets()] == list(PRESET_NAMES)

    def test_unknown_preset(self):
        with pytest.raises(UnknownPresetError):
            load_preset_file("fig9")

    @pytest.mark.parametrize("name,kappa_khz", [
        ("fig2a", 2.0), ("fig2b", 2.0), ("fig3a", 2.0), ("fig3b", 2.0),
        ("fig4a", 2.0), ("fig4b", 2.0), ("fig5b", 1.9), ("fig6b", 1.76),
    ])
    def test_hopping_rates(self, name, kappa_khz):
        scenario = preset(name)
        assert scenario.graph.kappa[0, 1] == pytest.approx(kappa_khz * KHZ)

    def test_free_hopping_control_matches(self):
        """fig4a 与 fig2a 是同一个自由跳跃对照"""
        a = preset("fig2a")
        b = preset("fig4a")
        assert np.array_equal(a.tau_grid, b.tau_grid)
        assert a.initial_phonons == b.initial_phonons
        assert not a.dd_pulses and not b.dd_pulses

    def test_phase_shift_chi_over_kappa(self):
        scenario = preset("fig3b")
        event = scenario.dd_pulses[0].event
        assert event.chi / scenario.graph.kappa[0, 1] == pytest.approx(50.0)
        assert event.instantaneous
        assert scenario.dd_pulses[0].time == pytest.approx(62.5 * US)

    def test_sideband_echo_pulse(self):
        pulse = preset("fig4b").dd_pulses[0]
        assert pulse.event.kind.value == "rsb"
        assert pulse.event.length == pytest.approx(20 * US)

    def test_experimental_presets(self):
        scenario = preset("fig5b")
        assert scenario.shots == 50
        assert scenario.noise.thermal_occupation == pytest.approx(0.04)
        assert scenario.noise.dephasing_sideband == pytest.approx(4.433 * KHZ)
        assert [p.time / US for p in scenario.dd_pulses] == pytest.approx([100.0])
        assert [o.pattern for o in scenario.observables] == [("bright", "dark"), ("dark", "bright")]

    def test_multi_pulse_grid(self):
        scenario = preset("fig6b")
        grid_us = scenario.tau_grid / US
        assert grid_us[0] == 0.0
        assert grid_us[-1] == pytest.approx(1000.0)
        assert np.all(np.diff(grid_us) > 0)
        assert grid_us.size == 6 + 78 + 56
        assert [p.time / US for p in scenario.dd_pulses] == pytest.approx([50, 175, 300, 425])
        assert {p.event.ion for p in scenario.dd_pulses} == {1}


class TestScenarioFile:
    """测试场景文件模型"""

    def setup_method(self):
        self.base = load_preset_file("fig2a")

    def test_overrides(self):
        updated = self.base.with_overrides(ScenarioOverrides(shots=20, seed=5, tau_step_us=50))
        assert updated.shots == 20
        assert updated.seed == 5
        assert updated.tau_points_us().tolist() == [float(t) for t in range(0, 501, 50)]
        assert self.base.shots == 0

    def test_overlay_deep_merge(self):
        noisy = load_preset_file("fig5b").with_overlay({"noise": {"dephasing_sideband_khz": 6.0}})
        assert noisy.noise.dephasing_sideband_khz == 6.0
        assert noisy.noise.thermal_occupation == pytest.approx(0.04)

    def test_overlay_revalidates(self):
        with pytest.raises(ValidationError):
            self.base.with_overlay({"shots": -3})

    def test_digest(self):
        assert self.base.digest() == load_preset_file("fig2a").digest()
        assert self.base.digest() != self.base.with_overrides(ScenarioOverrides(seed=1)).digest()
        assert len(self.base.digest()) == 64

    def test_parameter_echo_in_si(self):
        echo = self.base.parameter_echo(1e-8)
        assert echo["kappa_rad_s"]["0-1"] == pytest.approx(2 * math.pi * 2e3)
        assert echo["dt_max_s"] == 1e-8
        assert echo["tau_s"][-1] == pytest.approx(500e-6)

    def test_unknown_field_rejected(self):
        document = self.base.model_dump()
        document["colour"] = "blue"
        with pytest.raises(ValidationError):
            ScenarioFile.model_validate(document)

    def test_bad_hopping_pair(self):
        document = self.base.model_dump()
        document["hopping"] = [{"ions": [0, 0], "kappa_khz": 2.0}]
        with pytest.raises(ScenarioValidationError) as exc:
            ScenarioFile.model_validate(document).to_scenario()
        assert exc.value.invariant == "hopping-pairs"

    def test_dd_pulse_beyond_grid(self):
        document = load_preset_file("fig2b").model_dump()
        document["dd_pulses"][0]["time_us"] = 600
        with pytest.raises(ScenarioValidationError) as exc:
            ScenarioFile.model_validate(document).to_scenario()
        assert exc.value.invariant == "dd-within-body"

    def test_grid_range_points(self):
        assert GridRange(start_us=0, stop_us=1, step_us=0.25).points().tolist() == [0, 0.25, 0.5, 0.75, 1.0]
        assert GridRange(start_us=0, stop_us=1, step_us=0.3).points().tolist() == [0, 0.3, 0.6, 0.9]
        with pytest.raises(ScenarioValidationError):
            GridRange(start_us=5, stop_us=1, step_us=1).points()
