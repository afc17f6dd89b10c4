"""输出写入：CSV / JSON / Husimi 帧 (CSV 或 float64 二进制 + JSON 头)。

所有浮点数以固定格式写出，保证相同输入得到逐字节相同的文件。
"""

from __future__ import annotations
import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from utils.file_utils import dump_json, ensure_dir
from .exceptions import ExportError
from .models import OtocSeries, PhaseGrid, ScanRow, StateVector, Trajectory

FLOAT_FORMAT = "{:.12g}"


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return FLOAT_FORMAT.format(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as e:
        raise ExportError(f"写入 CSV 失败 ({path}): {e}", "EXPORT_CSV") from e
    logging.debug(f"已写入 {path}")
    return path


def write_json(path: Path, data: dict) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    if not dump_json(path, data):
        raise ExportError(f"写入 JSON 失败: {path}", "EXPORT_JSON")
    return path


def write_state_csv(path: Path, state: StateVector) -> Path:
    return write_csv(path, ("real", "imag"), ((c.real, c.imag) for c in state.amplitudes))


def read_state_csv(path: Path) -> StateVector:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ExportError(f"读取态矢量 CSV 失败 ({path}): {e}", "IMPORT_STATE") from e
    return StateVector(data[:, 0] + 1j * data[:, 1])


def write_otoc_csv(path: Path, series: OtocSeries, extra_columns: dict[str, Sequence] | None = None) -> Path:
    extra_columns = extra_columns or {}
    header = ["t", "C"] + (["C_stderr"] if series.stderr is not None else []) + list(extra_columns)
    columns = [series.times, series.values]
    if series.stderr is not None:
        columns.append(series.stderr)
    columns.extend(extra_columns.values())
    return write_csv(path, header, zip(*columns))


def series_to_dict(series: OtocSeries) -> dict:
    data = {
        "state_label": series.state_label,
        "params": series.params_snapshot.to_dict(),
        "t": [float(v) for v in series.times],
        "C": [float(v) for v in series.values],
    }
    if series.stderr is not None:
        data["C_stderr"] = [float(v) for v in series.stderr]
    return data


def write_otoc_json(path: Path, series: OtocSeries, metadata: dict | None = None) -> Path:
    data = series_to_dict(series)
    if metadata:
        data["metadata"] = metadata
    return write_json(path, data)


def write_overlay_csv(path: Path, table: dict) -> Path:
    header = list(table)
    return write_csv(path, header, zip(*(table[k] for k in header)))


def write_trajectory_csv(path: Path, trajectory: Trajectory) -> Path:
    return write_csv(path, ("t", "z", "phi", "h"),
                     zip(trajectory.times, trajectory.z, trajectory.phi, trajectory.energy))


def write_energy_grid_csv(path: Path, z: np.ndarray, phi: np.ndarray, energy: np.ndarray) -> Path:
    rows = ((z[i], phi[j], energy[i, j]) for i in range(z.size) for j in range(phi.size))
    return write_csv(path, ("z", "phi", "h"), rows)


def write_husimi_csv(path: Path, grid: PhaseGrid) -> Path:
    rows = ((grid.z_values[i], grid.phi_values[j], grid.density[i, j])
            for i in range(grid.z_values.size) for j in range(grid.phi_values.size))
    return write_csv(path, ("z", "phi", "q"), rows)


def write_husimi_binary(path: Path, grid: PhaseGrid) -> tuple[Path, Path]:
    """行主序 float64 二进制 + 小 JSON 头 (维度、范围、时间戳)。"""
    path = Path(path)
    ensure_dir(path.parent)
    try:
        np.ascontiguousarray(grid.density, dtype="<f8").tofile(path)
    except OSError as e:
        raise ExportError(f"写入二进制帧失败 ({path}): {e}", "EXPORT_BIN") from e
    header = {
        "dims": [int(grid.z_values.size), int(grid.phi_values.size)],
        "z_range": [float(grid.z_values[0]), float(grid.z_values[-1])],
        "phi_range": [float(grid.phi_values[0]), float(grid.phi_values[-1])],
        "time": float(grid.time),
        "dtype": "float64",
        "order": "row-major (z, phi)",
    }
    header_path = write_json(path.with_suffix(".json"), header)
    return path, header_path


def scan_rows(rows: list[ScanRow]) -> list[list]:
    out = []
    for row in rows:
        f2, f1, kink = row.fit_2ls_window, row.fit_1ls_window, row.kink
        out.append([
            row.theta, row.n_particles, row.lambda_s_classical,
            f2.slope if f2 else None, f2.stderr if f2 else None,
            f1.slope if f1 else None, f1.stderr if f1 else None,
            kink.time if kink and kink.found else None,
            kink.error if kink and kink.found else None,
        ])
    return out


SCAN_HEADER = ("theta", "N", "lambda_s", "slope_2w", "stderr_2w", "slope_1w", "stderr_1w", "kink_t", "kink_err")


def write_scan_csv(path: Path, rows: list[ScanRow]) -> Path:
    return write_csv(path, SCAN_HEADER, scan_rows(rows))


PLOT_SCRIPT_TEMPLATE = '''"""读取 {csv_name} 并绘图；需要自行安装 matplotlib。"""
import csv
import matplotlib.pyplot as plt

with open("{csv_name}", encoding="utf-8") as f:
    rows = list(csv.DictReader(f))
x = [float(r["{x}"]) for r in rows]
for column in {columns!r}:
    y = [float(r[column]) if r[column] not in ("", "nan") else float("nan") for r in rows]
    plt.plot(x, y, label=column)
plt.yscale("{yscale}")
plt.xlabel("{x}")
plt.legend()
plt.savefig("{csv_stem}.pdf")
'''


def write_plot_script(csv_path: Path, x: str, columns: Sequence[str], yscale: str = "log") -> Path:
    csv_path = Path(csv_path)
    script = PLOT_SCRIPT_TEMPLATE.format(csv_name=csv_path.name, csv_stem=csv_path.stem,
                                         x=x, columns=list(columns), yscale=yscale)
    script_path = csv_path.with_name(f"plot_{csv_path.stem}.py")
    script_path.write_text(script, encoding="utf-8")
    return script_path
