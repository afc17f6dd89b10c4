import csv
import json
import math

import pytest

from core import separatrix
from core.models import DimerParams
from main import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from utils.error_logger import ErrorLogger

pytestmark = pytest.mark.usefixtures("restore_logging")


def _rows(path):
    with open(path, encoding="utf-8") as f:
        return list(csv.DictReader(f))


def test_stability_scan(tmp_path):
    assert main(["stability-scan", "--out", str(tmp_path), "--set", "stability_scan.points=21"]) == EXIT_OK
    out = tmp_path / "stability_scan"
    rows = _rows(out / "stability.csv")
    assert len(rows) == 23
    row_135 = next(r for r in rows if float(r["theta"]) == 1.35)
    assert float(row_135["lambda_s"]) == pytest.approx(0.97, abs=0.01)
    assert float(row_135["lambda_numeric"]) == pytest.approx(float(row_135["lambda_s"]), abs=1e-9)
    assert all(r["stable"] == "1" for r in rows if float(r["theta"]) < 1.1)
    resolved = json.loads((out / "run_config.json").read_text(encoding="utf-8"))
    assert resolved["stability_scan"]["points"] == 21


def test_reruns_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["stability-scan", "--out", str(tmp_path / name), "--set", "stability_scan.points=31"]) == EXIT_OK
    first = (tmp_path / "a" / "stability_scan" / "stability.csv").read_bytes()
    second = (tmp_path / "b" / "stability_scan" / "stability.csv").read_bytes()
    assert first == second


def test_phase_portrait(tmp_path):
    args = ["phase-portrait", "--out", str(tmp_path), "--n", "50",
            "--set", "phase_portrait.nz=21", "--set", "phase_portrait.nphi=21"]
    assert main(args) == EXIT_OK
    out = tmp_path / "phase_portrait"
    assert len(_rows(out / "fixed_points.csv")) == 4
    assert len(_rows(out / "energy_grid.csv")) == 21 * 21
    assert (out / "separatrix.csv").exists()
    assert (out / "trajectory.csv").exists()


def test_otoc_with_overlay_and_plot_script(tmp_path):
    args = ["otoc", "--out", str(tmp_path), "--n", "40", "--plot-script", "--set", "otoc.time_points=60"]
    assert main(args) == EXIT_OK
    out = tmp_path / "otoc"
    rows = _rows(out / "otoc.csv")
    assert len(rows) == 60
    assert list(rows[0]) == ["t", "C", "O", "O_short", "O_long", "regime"]
    assert float(rows[0]["C"]) == 0.0
    summary = json.loads((out / "otoc_summary.json").read_text(encoding="utf-8"))
    assert summary["40"]["time_scales"]["n_particles"] == 40
    assert "kink" in summary["40"]
    assert (out / "plot_otoc.py").exists()
    assert _rows(out / "overlay.csv")[0].keys() == {"t", "O", "O_short", "O_long", "regime"}
    series = json.loads((out / "otoc.json").read_text(encoding="utf-8"))
    assert len(series["C"]) == 60 and "backend" in series["metadata"]


def test_otoc_multiple_n(tmp_path):
    args = ["otoc", "--out", str(tmp_path), "--set", "otoc.n_list=[20, 30]", "--set", "otoc.time_points=40"]
    assert main(args) == EXIT_OK
    assert (tmp_path / "otoc" / "otoc_N20.csv").exists()
    assert (tmp_path / "otoc" / "otoc_N30.csv").exists()


def test_otoc_squeezed(tmp_path):
    args = ["otoc", "--out", str(tmp_path), "--n", "40",
            "--set", "otoc.squeeze_fraction=0.5", "--set", "otoc.time_points=60"]
    assert main(args) == EXIT_OK
    summary = json.loads((tmp_path / "otoc" / "otoc_summary.json").read_text(encoding="utf-8"))
    assert summary["40"]["state"].startswith("squeezed")
    assert "full" in summary["40"]["fits"]
    unsqueezed = separatrix.scale_a(DimerParams(1.35, 40))
    assert summary["40"]["time_scales"]["a"] == pytest.approx(unsqueezed / math.sqrt(40), rel=1e-9)
    assert len(_rows(tmp_path / "otoc" / "initial_state.csv")) == 41


def test_otoc_stable_regime_needs_t_final(tmp_path):
    assert main(["otoc", "--out", str(tmp_path), "--theta", "0.5", "--n", "20"]) == EXIT_CONFIG
    args = ["otoc", "--out", str(tmp_path), "--theta", "0.5", "--n", "20",
            "--set", "otoc.t_final=2.0", "--set", "otoc.time_points=11"]
    assert main(args) == EXIT_OK
    rows = _rows(tmp_path / "otoc" / "otoc.csv")
    assert list(rows[0]) == ["t", "C"]


def test_husimi_binary_frames(tmp_path):
    args = ["husimi", "--out", str(tmp_path), "--n", "30",
            "--set", "husimi.frames=3", "--set", "husimi.nz=11", "--set", "husimi.nphi=12",
            "--set", "husimi.format=binary"]
    assert main(args) == EXIT_OK
    out = tmp_path / "husimi"
    assert sorted(p.name for p in out.glob("husimi_*.bin")) == ["husimi_0000.bin", "husimi_0001.bin",
                                                                 "husimi_0002.bin"]
    header = json.loads((out / "husimi_0000.json").read_text(encoding="utf-8"))
    assert header["dims"] == [11, 12]
    frames = _rows(out / "frames.csv")
    assert len(frames) == 3
    assert float(frames[0]["t"]) == 0.0


def test_twa(tmp_path):
    args = ["twa", "--out", str(tmp_path), "--n", "200", "--seed", "9",
            "--set", "twa.samples=50", "--set", "twa.time_points=4"]
    assert main(args) == EXIT_OK
    rows = _rows(tmp_path / "twa" / "twa.csv")
    assert list(rows[0]) == ["t", "C", "C_stderr", "O_analytic", "z_score"]
    assert len(rows) == 4


def test_scan(tmp_path):
    args = ["scan", "--out", str(tmp_path), "--set", "scan.theta_points=2", "--set", "scan.n_list=[30]",
            "--set", "scan.time_points=100", "--set", "scan.theta_min=1.3", "--set", "scan.theta_max=1.4"]
    assert main(args) == EXIT_OK
    rows = _rows(tmp_path / "scan" / "scan.csv")
    assert [float(r["theta"]) for r in rows] == [1.3, 1.4]
    summary = json.loads((tmp_path / "scan" / "scan_summary.json").read_text(encoding="utf-8"))
    assert "30" in summary and "ratios" in summary and "failed_cells" in summary


def test_invalid_config_exit_code(tmp_path):
    assert main(["stability-scan", "--out", str(tmp_path), "--theta", "3.0"]) == EXIT_CONFIG
    assert main(["otoc", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path):
    assert main(["twa", "--out", str(tmp_path), "--theta", "0.5", "--n", "20"]) == EXIT_NUMERICAL
    assert list((tmp_path / "logs" / "errors").glob("error_*.log"))
    assert ErrorLogger.log_dir() == tmp_path / "logs" / "errors"
    summary = ErrorLogger.get_error_summary()
    assert summary.startswith("错误快照数量: ") and not summary.startswith("错误快照数量: 0")
    assert "error_error_" in summary


def test_unknown_command_is_argparse_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["bogus"])
    assert excinfo.value.code == 2
