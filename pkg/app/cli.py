"""
命令行入口
    python -m app run fig2a --shots 0
    python -m app presets
    python -m app calibrate-dephasing --target 0.08 --scenario fig5b
    python -m app selftest

退出码：0 成功；1 运行失败；2 场景文件无法解析；3 场景不满足不变量
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from app.config import Settings, get_settings
from app.exceptions import (
    CalibrationError,
    FockCutoffError,
    ScenarioParseError,
    ScenarioValidationError,
    ScheduleConflictError,
    SimulationError,
)
from app.models.scenario import ScenarioOverrides, angular_to_khz, khz_to_angular
from app.services.calibration import calibrate_dephasing, sideband_rabi
from app.services.presets import list_presets
from app.services.runner import load_scenario_source, run_scenario_file
from app.services.selftest import SelfTestSuite
from app.utils.timeseries_io import manifest_path, write_manifest, write_timeseries_csv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_INVALID = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description="局域声子动力学解耦模拟器")
    parser.add_argument("--workers", type=int, help="τ 网格并行线程数（默认取 PHONON_DD_WORKERS 或 CPU 数）")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="运行预设或场景文件，输出 CSV 与运行清单")
    run.add_argument("source", help="预设名称（fig2a…fig6b）或场景 JSON 文件路径")
    run.add_argument("--shots", type=int, help="测量次数，0 为精确模式")
    run.add_argument("--seed", type=int, help="随机种子")
    run.add_argument("--dt-max", type=float, dest="dt_max", help="RK4 最大步长（µs）")
    run.add_argument("--tau-step", type=float, dest="tau_step", help="τ 步长（µs），替换各网格段的步长")
    run.add_argument("--overlay", help="覆盖文件（如 calibrate-dephasing 的输出）")
    run.add_argument("--out", help="CSV 输出路径（默认 <output_dir>/<name>.csv）")

    sub.add_parser("presets", help="列出预设场景")

    calibrate = sub.add_parser("calibrate-dephasing", help="按蓝边带 π 脉冲失效率拟合 γ_s")
    calibrate.add_argument("--target", type=float, default=0.08, help="目标失效率，范围 [0, 0.5)")
    calibrate.add_argument("--scenario", default="fig5b", help="读取蓝边带拉比频率的场景（预设名或文件）")
    calibrate.add_argument("--rabi-khz", type=float, dest="rabi_khz", help="直接指定拉比频率 2g/2π（kHz）")
    calibrate.add_argument("--dt-max", type=float, dest="dt_max", help="RK4 最大步长（µs）")
    calibrate.add_argument("--overlay-out", dest="overlay_out", help="覆盖文件输出路径")

    sub.add_parser("selftest", help="运行结构不变量自检")
    return parser


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    try:
        scenario_file = load_scenario_source(args.source, args.overlay)
        overrides = ScenarioOverrides(
            shots=args.shots, seed=args.seed, dt_max_us=args.dt_max, tau_step_us=args.tau_step
        )
    except ScenarioParseError as e:
        print(f"❌ 场景解析失败: {e.source}")
        for line in e.diagnostics:
            print(f"   - {line}")
        return EXIT_PARSE
    except ValueError as e:
        print(f"❌ 参数不合法: {e}")
        return EXIT_PARSE

    out = Path(args.out) if args.out else Path(settings.output_dir) / f"{scenario_file.name}.csv"
    try:
        outcome = run_scenario_file(scenario_file, overrides, settings, output=out)
    except ScenarioValidationError as e:
        print(f"❌ 场景校验失败，不变量 [{e.invariant}]: {e}")
        return EXIT_INVALID
    except ScheduleConflictError as e:
        print(f"❌ 场景校验失败，不变量 [schedule-conflict]: {e}")
        return EXIT_INVALID
    except FockCutoffError as e:
        print(f"❌ 场景校验失败，不变量 [fock-cutoff]: {e}")
        return EXIT_INVALID
    except SimulationError as e:
        print(f"❌ 运行失败: {e}")
        return EXIT_FAILURE

    write_timeseries_csv(outcome.series, out)
    sidecar = write_manifest(outcome.manifest, manifest_path(out))
    print(f"✅ {scenario_file.name}: {len(outcome.series.times)} 个 τ 点，耗时 {outcome.manifest.wallTimeS:.2f} s")
    print(f"   CSV: {out}")
    print(f"   清单: {sidecar}")
    return EXIT_OK


def cmd_presets(args: argparse.Namespace, settings: Settings) -> int:
    for scenario_file in list_presets():
        print(f"{scenario_file.name:<6}  {scenario_file.figure:<10}  {scenario_file.description}")
    return EXIT_OK


def cmd_calibrate_dephasing(args: argparse.Namespace, settings: Settings) -> int:
    try:
        scenario_file = load_scenario_source(args.scenario)
        if args.rabi_khz is not None:
            rabi = khz_to_angular(args.rabi_khz)
        else:
            rabi = sideband_rabi(scenario_file)
        dt_max = (args.dt_max if args.dt_max is not None else settings.dt_max_us) * 1e-6
        result = calibrate_dephasing(args.target, rabi, dt_max)
    except ScenarioParseError as e:
        print(f"❌ 场景解析失败: {e}")
        return EXIT_PARSE
    except CalibrationError as e:
        print(f"❌ 校准失败: {e}")
        return EXIT_INVALID

    overlay_out = Path(args.overlay_out) if args.overlay_out else \
        Path(settings.output_dir) / f"{scenario_file.name}.dephasing.json"
    overlay_out.parent.mkdir(parents=True, exist_ok=True)
    with overlay_out.open("w", encoding="utf-8") as f:
        json.dump(result.overlay(), f, ensure_ascii=False, indent=2)
        f.write("\n")
    print(f"✅ 目标失效率 {result.target:g}: γ_s/2π = {result.dephasing_sideband_khz:.4f} kHz"
          f"（2g/2π = {angular_to_khz(result.rabi):g} kHz，实际失效率 {result.achieved_infidelity:.6f}）")
    print(f"   覆盖文件: {overlay_out}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace, settings: Settings) -> int:
    results = SelfTestSuite().run()
    for result in results:
        mark = "✅" if result.passed else "❌"
        print(f"{mark} {result.name}: {result.detail}")
    failures = sum(not r.passed for r in results)
    print("=" * 50)
    print(f"{len(results) - failures}/{len(results)} 项通过")
    return EXIT_OK if failures == 0 else EXIT_FAILURE


COMMANDS = {
    "run": cmd_run,
    "presets": cmd_presets,
    "calibrate-dephasing": cmd_calibrate_dephasing,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings = get_settings()
    if args.workers is not None:
        if args.workers < 1:
            print("❌ --workers 必须 ≥ 1")
            return EXIT_PARSE
        settings = settings.model_copy(update={"workers": args.workers})
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return COMMANDS[args.command](args, settings)


if __name__ == "__main__":
    sys.exit(main())
