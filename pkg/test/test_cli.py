"""
命令行测试

测试内容：
1. presets 列表
2. run：CSV 内容、运行清单、重复运行逐字节一致（与线程数无关）
3. 退出码：2 解析失败，3 不变量不成立
4. calibrate-dephasing 写出覆盖文件，可被 run --overlay 读取
"""
import json
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.cli import EXIT_INVALID, EXIT_OK, EXIT_PARSE, main
from app.models.scenario import KHZ, ScenarioOverrides
from app.services.presets import PRESET_NAMES, load_preset_file
from app.utils.timeseries_io import manifest_path, read_manifest


class TestPresetsCommand:
    """测试 presets 子命令"""

    def test_lists_all(self, capsys):
        assert main(["presets"]) == EXIT_OK
        lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
        assert len(lines) == len(PRESET_NAMES)
        assert lines[0].startswith("fig2a")
        assert "Fig. 6(b)" in lines[-1]


class TestRunCommand:
    """测试 run 子命令"""

    def test_free_hopping_csv(self, tmp_path):
        out = tmp_path / "fig2a.csv"
        assert main(["run", "fig2a", "--tau-step", "50", "--out", str(out)]) == EXIT_OK
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "tau_us,P10,P01,shots"
        assert "250.000000,0.000000,1.000000,0" in lines
        manifest = read_manifest(manifest_path(out))
        assert manifest.scenario == "fig2a"
        assert manifest.shots == 0
        assert manifest.integrator["method"] == "rk4"
        expected = load_preset_file("fig2a").with_overrides(ScenarioOverrides(tau_step_us=50.0))
        assert manifest.scenarioHash == expected.digest()

    def test_byte_identical_reruns(self, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        args = ["run", "fig5b", "--tau-step", "100", "--dt-max", "0.05"]
        assert main(["--workers", "1", *args, "--out", str(first)]) == EXIT_OK
        assert main(["--workers", "3", *args, "--out", str(second)]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()
        key_a = read_manifest(manifest_path(first)).reproduction_key()
        key_b = read_manifest(manifest_path(second)).reproduction_key()
        assert key_a == key_b

    def test_seed_changes_sampled_output(self, tmp_path):
        first = tmp_path / "s0.csv"
        second = tmp_path / "s1.csv"
        args = ["run", "fig5b", "--tau-step", "100", "--dt-max", "0.05"]
        assert main([*args, "--seed", "0", "--out", str(first)]) == EXIT_OK
        assert main([*args, "--seed", "1", "--out", str(second)]) == EXIT_OK
        assert read_manifest(manifest_path(first)).seed == 0
        assert read_manifest(manifest_path(second)).seed == 1

    def test_scenario_file(self, tmp_path):
        document = load_preset_file("fig2a").model_dump(mode="json")
        document["name"] = "custom"
        document["tau_grid"] = [{"start_us": 0, "stop_us": 250, "step_us": 125}]
        source = tmp_path / "custom.json"
        source.write_text(json.dumps(document), encoding="utf-8")
        out = tmp_path / "custom.csv"
        assert main(["run", str(source), "--out", str(out)]) == EXIT_OK
        assert out.read_text(encoding="utf-8").splitlines()[-1] == "250.000000,0.000000,1.000000,0"


class TestExitCodes:
    """测试退出码"""

    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == EXIT_PARSE
        assert "文件不存在" in capsys.readouterr().out

    def test_malformed_json(self, tmp_path, capsys):
        source = tmp_path / "broken.json"
        source.write_text('{"name": "x",\n  "n_ions": }', encoding="utf-8")
        assert main(["run", str(source)]) == EXIT_PARSE
        assert "第 2 行" in capsys.readouterr().out

    def test_unknown_field(self, tmp_path):
        document = load_preset_file("fig2a").model_dump(mode="json")
        document["hoping"] = []
        source = tmp_path / "typo.json"
        source.write_text(json.dumps(document), encoding="utf-8")
        assert main(["run", str(source)]) == EXIT_PARSE

    def test_negative_shots(self):
        assert main(["run", "fig2a", "--shots", "-1"]) == EXIT_PARSE

    def test_invariant_violation(self, tmp_path, capsys):
        document = load_preset_file("fig2b").model_dump(mode="json")
        document["dd_pulses"][0]["time_us"] = 600
        source = tmp_path / "late.json"
        source.write_text(json.dumps(document), encoding="utf-8")
        assert main(["run", str(source), "--out", str(tmp_path / "late.csv")]) == EXIT_INVALID
        assert "dd-within-body" in capsys.readouterr().out
        assert not (tmp_path / "late.csv").exists()

    def test_schedule_conflict(self, tmp_path, capsys):
        document = load_preset_file("fig4b").model_dump(mode="json")
        second = dict(document["dd_pulses"][0], time_us=70.0)
        document["dd_pulses"].append(second)
        source = tmp_path / "overlap.json"
        source.write_text(json.dumps(document), encoding="utf-8")
        assert main(["run", str(source), "--out", str(tmp_path / "overlap.csv")]) == EXIT_INVALID
        assert "schedule-conflict" in capsys.readouterr().out

    def test_cutoff_too_small(self, tmp_path, capsys):
        document = load_preset_file("fig3a").model_dump(mode="json")
        document["fock_cutoff"] = 3
        source = tmp_path / "cutoff.json"
        source.write_text(json.dumps(document), encoding="utf-8")
        assert main(["run", str(source), "--out", str(tmp_path / "cutoff.csv")]) == EXIT_INVALID
        assert "fock-cutoff" in capsys.readouterr().out

    def test_initial_phonons_beyond_cutoff(self, tmp_path, capsys):
        document = load_preset_file("fig2a").model_dump(mode="json")
        document["initial"]["phonons"] = [3, 0]
        source = tmp_path / "fock.json"
        source.write_text(json.dumps(document), encoding="utf-8")
        assert main(["run", str(source), "--out", str(tmp_path / "fock.csv")]) == EXIT_INVALID
        assert "initial-state-within-cutoff" in capsys.readouterr().out

    def test_invalid_workers(self):
        assert main(["--workers", "0", "presets"]) == EXIT_PARSE


class TestCalibrateCommand:
    """测试 calibrate-dephasing 子命令"""

    def test_writes_overlay(self, tmp_path):
        overlay = tmp_path / "fig5b.dephasing.json"
        code = main([
            "calibrate-dephasing", "--target", "0.08", "--scenario", "fig5b",
            "--dt-max", "0.05", "--overlay-out", str(overlay),
        ])
        assert code == EXIT_OK
        data = json.loads(overlay.read_text(encoding="utf-8"))
        assert data["noise"]["dephasing_sideband_khz"] > 0

        out = tmp_path / "fig5b.csv"
        args = ["run", "fig5b", "--overlay", str(overlay), "--tau-step", "250", "--dt-max", "0.05"]
        assert main([*args, "--out", str(out)]) == EXIT_OK
        echoed = read_manifest(manifest_path(out)).parameters["noise"]["dephasing_sideband_rad_s"]
        assert echoed == pytest.approx(data["noise"]["dephasing_sideband_khz"] * KHZ)

    def test_unreachable_target(self, tmp_path):
        code = main(["calibrate-dephasing", "--target", "0.6", "--overlay-out", str(tmp_path / "x.json")])
        assert code == EXIT_INVALID
