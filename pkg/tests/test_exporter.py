import json

import numpy as np
import pytest

from core import exporter
from core.hilbert import coherent_state
from core.models import DimerParams, FitResult, KinkResult, OtocSeries, PhaseGrid, ScanRow


def test_fmt_is_fixed_and_deterministic():
    assert exporter.fmt(0.1 + 0.2) == "0.3"
    assert exporter.fmt(np.float64(1.0 / 3.0)) == "0.333333333333"
    assert exporter.fmt(None) == ""
    assert exporter.fmt(True) == "1"
    assert exporter.fmt(np.int64(7)) == "7"
    assert exporter.fmt(float("nan")) == "nan"
    assert exporter.fmt("hyperbolic") == "hyperbolic"


def test_state_csv_read_back(tmp_path):
    state = coherent_state(DimerParams(1.35, 12), 0.2, 0.5)
    path = exporter.write_state_csv(tmp_path / "state.csv", state)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "real,imag"
    restored = exporter.read_state_csv(path)
    np.testing.assert_allclose(restored.amplitudes, state.amplitudes, atol=1e-11)


def test_otoc_csv_with_extra_columns(tmp_path):
    series = OtocSeries([0.0, 1.0], [0.0, 2.5], DimerParams(1.35, 10), "coherent(0,0)", stderr=[0.0, 0.1])
    path = exporter.write_otoc_csv(tmp_path / "otoc.csv", series, {"O": [0.0, 2.4], "regime": ["a", "b"]})
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,C,C_stderr,O,regime"
    assert lines[2] == "1,2.5,0.1,2.4,b"


def test_otoc_json(tmp_path):
    series = OtocSeries([0.0, 1.0], [0.0, 2.5], DimerParams(1.35, 10), "coherent(0,0)")
    path = exporter.write_otoc_json(tmp_path / "otoc.json", series, {"backend": "eigendecomposition"})
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["C"] == [0.0, 2.5]
    assert data["params"]["n_particles"] == 10
    assert data["metadata"]["backend"] == "eigendecomposition"


def test_husimi_writers(tmp_path):
    grid = PhaseGrid([-0.5, 0.5], [0.0, 1.0, 2.0], np.arange(6.0).reshape(2, 3), time=1.5)
    csv_path = exporter.write_husimi_csv(tmp_path / "h.csv", grid)
    assert len(csv_path.read_text(encoding="utf-8").splitlines()) == 1 + 6

    bin_path, header_path = exporter.write_husimi_binary(tmp_path / "h_0000.bin", grid)
    header = json.loads(header_path.read_text(encoding="utf-8"))
    assert header["dims"] == [2, 3]
    assert header["time"] == 1.5
    data = np.fromfile(bin_path, dtype="<f8").reshape(header["dims"])
    np.testing.assert_array_equal(data, grid.density)


def test_scan_csv_header_and_missing_fits(tmp_path):
    fit = FitResult((1.0, 2.0), 1.9, 0.0, 0.05, 0.99, 30)
    rows = [
        ScanRow(1.3, 100, 0.9, fit, None, KinkResult(True, 3.2, 0.1)),
        ScanRow(1.4, 100, 0.95, None, None, KinkResult(False)),
    ]
    path = exporter.write_scan_csv(tmp_path / "scan.csv", rows)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "theta,N,lambda_s,slope_2w,stderr_2w,slope_1w,stderr_1w,kink_t,kink_err"
    assert lines[1] == "1.3,100,0.9,1.9,0.05,,,3.2,0.1"
    assert lines[2] == "1.4,100,0.95,,,,,,"


def test_plot_script(tmp_path):
    csv_path = exporter.write_csv(tmp_path / "otoc.csv", ("t", "C"), [(0.0, 1.0)])
    script = exporter.write_plot_script(csv_path, "t", ["C"])
    assert script.name == "plot_otoc.py"
    text = script.read_text(encoding="utf-8")
    assert "otoc.csv" in text and "otoc.pdf" in text


def test_write_json_sorted(tmp_path):
    path = exporter.write_json(tmp_path / "a.json", {"b": 1, "a": 2})
    assert path.read_text(encoding="utf-8") == '{\n  "a": 2,\n  "b": 1\n}\n'


@pytest.mark.parametrize("value,expected", [(1e-20, "1e-20"), (123456789.0, "123456789")])
def test_fmt_magnitudes(value, expected):
    assert exporter.fmt(value) == expected
