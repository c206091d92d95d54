"""
CSV 与运行清单读写测试
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.models.result import RunManifest
from app.services.experiment import TimeSeries
from app.utils.timeseries_io import (
    manifest_path,
    read_manifest,
    read_timeseries_csv,
    write_manifest,
    write_timeseries_csv,
)


class TestTimeSeriesCsv:
    """测试 CSV 格式"""

    def setup_method(self):
        self.series = TimeSeries(
            times=np.array([0.0, 2.5e-6, 5e-6]),
            columns={"P10": [1.0, 0.62, 0.3], "P01": [0.0, 0.36, 0.66]},
            shots=50,
            shot_counts={"P10": np.array([50, 31, 15]), "P01": np.array([0, 18, 33])},
        )

    def test_header_and_format(self, tmp_path):
        path = write_timeseries_csv(self.series, tmp_path / "out" / "run.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "tau_us,P10,P01,shots"
        assert lines[1] == "0.000000,1.000000,0.000000,50"
        assert lines[2] == "2.500000,0.620000,0.360000,50"
        assert len(lines) == 4

    def test_read_back(self, tmp_path):
        path = write_timeseries_csv(self.series, tmp_path / "run.csv")
        loaded = read_timeseries_csv(path)
        assert loaded.labels == ["P10", "P01"]
        assert loaded.shots == 50
        assert np.allclose(loaded.times, self.series.times)
        assert loaded.shot_counts["P01"].tolist() == [0, 18, 33]

    def test_exact_mode(self, tmp_path):
        series = TimeSeries(times=[0.0], columns={"P20": [0.25]})
        loaded = read_timeseries_csv(write_timeseries_csv(series, tmp_path / "exact.csv"))
        assert loaded.shots == 0
        assert loaded.shot_counts is None

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_timeseries_csv(path)


class TestManifest:
    """测试运行清单"""

    def test_sidecar_path(self, tmp_path):
        assert manifest_path(tmp_path / "fig2a.csv") == tmp_path / "fig2a.manifest.json"

    def test_round_trip(self, tmp_path):
        manifest = RunManifest(
            scenario="fig2a",
            scenarioHash="ab" * 32,
            parameters={"n_ions": 2},
            seed=0,
            shots=0,
            integrator={"method": "rk4", "dtMaxS": 1e-8},
            wallTimeS=0.12,
            output="fig2a.csv",
        )
        path = write_manifest(manifest, tmp_path / "fig2a.manifest.json")
        assert read_manifest(path) == manifest
        assert manifest.reproduction_key() == {
            "scenarioHash": "ab" * 32, "seed": 0, "shots": 0, "dtMaxS": 1e-8,
        }
