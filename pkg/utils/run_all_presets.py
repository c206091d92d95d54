"""
批量运行全部预设脚本
依次运行 fig2a…fig6b，把 CSV 与运行清单写到输出目录（默认 PHONON_DD_OUTPUT_DIR）

    python utils/run_all_presets.py            # 按各预设自带的测量次数
    python utils/run_all_presets.py --shots 0  # 全部用精确模式
"""
import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.config import get_settings
from app.exceptions import SimulationError
from app.models.scenario import ScenarioOverrides
from app.services.presets import PRESET_NAMES, load_preset_file
from app.services.runner import run_scenario_file
from app.utils.timeseries_io import manifest_path, write_manifest, write_timeseries_csv

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="批量运行全部预设")
    parser.add_argument("--shots", type=int, help="测量次数（默认取预设值），0 为精确模式")
    parser.add_argument("--out-dir", dest="out_dir", help="输出目录")
    args = parser.parse_args()

    settings = get_settings()
    out_dir = Path(args.out_dir or settings.output_dir)

    print("=" * 50)
    print("📦 批量运行预设")
    print("=" * 50)

    failed = []
    for name in PRESET_NAMES:
        out = out_dir / f"{name}.csv"
        try:
            outcome = run_scenario_file(
                load_preset_file(name), ScenarioOverrides(shots=args.shots), settings, output=out
            )
        except SimulationError as e:
            print(f"❌ {name}: {e}")
            failed.append(name)
            continue
        write_timeseries_csv(outcome.series, out)
        write_manifest(outcome.manifest, manifest_path(out))
        print(f"✅ {name}: {len(outcome.series.times)} 个 τ 点，耗时 {outcome.manifest.wallTimeS:.2f} s")

    if failed:
        print(f"\n❌ 失败的预设: {', '.join(failed)}")
        exit(1)
    print(f"\n✅ 全部完成，输出目录: {out_dir}")
