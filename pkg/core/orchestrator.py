from __future__ import annotations
import logging
from pathlib import Path
from typing import Callable

import numpy as np

from core import analysis, exporter, meanfield, phasespace, propagate, separatrix
from core.exceptions import ConfigurationError, OtocDimerError, ParameterError
from core.hilbert import build_hamiltonian, coherent_state, squeeze_by_backward_evolution
from core.models import DimerParams, PhasePoint, RunContext, StateVector
from utils.config_manager import resolved_backend
from utils.error_logger import ErrorLogger
from utils.file_utils import ensure_dir
from utils.multithreading_utils import process_items_with_threads, resolve_max_workers

COMMANDS = ("stability-scan", "phase-portrait", "otoc", "husimi", "scan", "twa")


class Orchestrator:
    """按已解析配置执行各子命令，每个命令把输出与 run_config.json 写入 <output_dir>/<命令名>/。"""

    def __init__(self, config: dict, update_progress: Callable[[str, float], None] | None = None):
        self.config = config
        self.update_progress = update_progress or (lambda msg, p: logging.debug(f"[{p:5.1f}%] {msg}"))
        self.output_root = Path(config["output_dir"])

    def _params(self, n_particles: int | None = None) -> DimerParams:
        return DimerParams(float(self.config["theta"]), int(n_particles or self.config["n_particles"]),
                           float(self.config["epsilon0"]))

    def _context(self, command: str) -> RunContext:
        out_dir = ensure_dir(self.output_root / command)
        ctx = RunContext(self.config, out_dir)
        ctx.outputs.append(exporter.write_json(out_dir / "run_config.json", self.config))
        return ctx

    def _maybe_plot_script(self, ctx: RunContext, csv_path: Path, x: str, columns, yscale: str = "log"):
        if self.config.get("plot_script"):
            ctx.outputs.append(exporter.write_plot_script(csv_path, x, columns, yscale))

    def _handle_error(self, error: OtocDimerError, command: str):
        ErrorLogger.log_general_error(
            error_title=f"命令 {command} 失败",
            error_message=str(error),
            exception=error,
            context={"theta": self.config.get("theta"), "n_particles": self.config.get("n_particles"),
                     "backend": self.config.get("backend"), "seed": self.config.get("seed")},
        )

    def run(self, command: str) -> RunContext:
        handlers = {
            "stability-scan": self.cmd_stability_scan,
            "phase-portrait": self.cmd_phase_portrait,
            "otoc": self.cmd_otoc,
            "husimi": self.cmd_husimi,
            "scan": self.cmd_scan,
            "twa": self.cmd_twa,
        }
        if command not in handlers:
            raise ConfigurationError(f"未知命令: {command}", "CLI_COMMAND")
        logging.info(f"===== 开始执行 {command} =====")
        try:
            ctx = handlers[command]()
        except OtocDimerError as e:
            self._handle_error(e, command)
            raise
        self.update_progress(f"{command} 完成", 100)
        logging.info(f"===== {command} 完成，共写出 {len(ctx.outputs)} 个文件 → {ctx.output_dir} =====")
        return ctx

    # ---- stability-scan -------------------------------------------------

    def cmd_stability_scan(self) -> RunContext:
        ctx = self._context("stability_scan")
        section = self.config["stability_scan"]
        thetas = np.linspace(float(section["theta_min"]), float(section["theta_max"]), int(section["points"]))
        thetas = np.unique(np.concatenate([thetas, np.asarray(section.get("extra_thetas", []), dtype=float)]))
        rows = []
        for theta in thetas:
            params = DimerParams(float(theta), int(self.config["n_particles"]), float(self.config["epsilon0"]))
            lam = meanfield.stability_exponent(params)
            numeric = max(meanfield.numerical_exponent(params, PhasePoint(0.0, 0.0)), 0.0)
            rows.append((theta, params.gamma,
                         lam, numeric, meanfield.antihom_classification(params), lam == 0.0))
        path = exporter.write_csv(ctx.output_dir / "stability.csv",
                                  ("theta", "gamma", "lambda_s", "lambda_numeric", "classification", "stable"), rows)
        ctx.outputs.append(path)
        peak = max(rows, key=lambda r: r[2])
        logging.info(f"稳定性扫描: {len(rows)} 个 Θ，最大 λs = {peak[2]:.5f} (Θ = {peak[0]:.4f})")
        self._maybe_plot_script(ctx, path, "theta", ["lambda_s", "lambda_numeric"], yscale="linear")
        return ctx

    # ---- phase-portrait -------------------------------------------------

    def cmd_phase_portrait(self) -> RunContext:
        ctx = self._context("phase_portrait")
        section = self.config["phase_portrait"]
        params = self._params()

        z, phi, energy = meanfield.phase_portrait_grid(params, int(section["nz"]), int(section["nphi"]))
        ctx.outputs.append(exporter.write_energy_grid_csv(ctx.output_dir / "energy_grid.csv", z, phi, energy))

        reports = meanfield.find_fixed_points(params)
        fp_rows = [(r.label, r.location.z, r.location.phi, r.classification, r.exponent,
                    meanfield.classical_energy(params, r.location)) for r in reports]
        ctx.outputs.append(exporter.write_csv(ctx.output_dir / "fixed_points.csv",
                                              ("label", "z", "phi", "classification", "exponent", "h"), fp_rows))

        if params.is_unstable:
            polyline = separatrix.separatrix_polyline(params, int(section["separatrix_samples"]))
            ctx.outputs.append(exporter.write_csv(ctx.output_dir / "separatrix.csv", ("z", "phi"),
                                                  ((p.z, p.phi) for p in polyline)))
            logging.info(f"分界线: h_sep = {meanfield.separatrix_energy(params):.6f}, "
                         f"max|z| = {max(abs(p.z) for p in polyline):.6f}")
        else:
            logging.info(f"Θ={params.theta:.4f} 处于稳定区，不输出分界线")

        z0, phi0 = section["trajectory_start"]
        trajectory = meanfield.integrate(params, PhasePoint(float(z0), float(phi0)),
                                         float(section["trajectory_t_final"]), tol=float(section["tol"]))
        ctx.outputs.append(exporter.write_trajectory_csv(ctx.output_dir / "trajectory.csv", trajectory))
        logging.info(f"示例轨道能量相对漂移: {trajectory.max_relative_energy_drift:.2e}")
        return ctx

    # ---- otoc ------------------------------------------------------------

    def _prepare_state(self, params: DimerParams, prop, squeeze_fraction: float,
                       tau_e: float | None) -> tuple[StateVector, str]:
        state = coherent_state(params, 0.0, 0.0)
        if squeeze_fraction <= 0:
            return state, "coherent(0,0)"
        if tau_e is None:
            raise ConfigurationError("稳定区无法按 τE 设定压缩时间", "SQUEEZE_STABLE")
        t0 = -squeeze_fraction * tau_e
        return squeeze_by_backward_evolution(params, state, t0, prop), f"squeezed(t0={t0:.6g})"

    def _time_grid(self, section: dict, tau_e: float | None) -> np.ndarray:
        points = int(section["time_points"])
        if section.get("t_final") is not None:
            return np.linspace(0.0, float(section["t_final"]), points)
        if tau_e is None:
            raise ConfigurationError("稳定区必须显式给出 otoc.t_final", "TIME_GRID")
        return propagate.default_time_grid(tau_e, points, float(section["span_factor"]))

    def _run_otoc_single(self, ctx: RunContext, params: DimerParams, suffix: str) -> dict:
        section = self.config["otoc"]
        omega = float(self.config["omega"])
        unstable = params.is_unstable
        ts = separatrix.time_scales(params, omega) if unstable else None
        prop = propagate.make_propagator(build_hamiltonian(params), resolved_backend(self.config))

        squeeze_fraction = float(section["squeeze_fraction"])
        state, label = self._prepare_state(params, prop, squeeze_fraction, ts.tau_E if ts else None)
        if squeeze_fraction > 0:
            a_eff = phasespace.effective_scale_a(params, -squeeze_fraction * ts.tau_E, omega)
            logging.info(f"压缩态等效尺度 a = {a_eff:.5g} (未压缩 a = {ts.a:.5g})")
            ts = separatrix.time_scales(params, omega, a=a_eff)

        times = self._time_grid(section, ts.tau_E if ts else None)
        series = propagate.otoc(prop, state, times, params, label, section["operator"])

        summary: dict = {"state": label, "params": params.to_dict(), "backend": prop.backend}
        extra = {}
        if ts is not None:
            logging.info(f"时间尺度: λs={ts.lambda_s:.5f}, τs={ts.tau_s:.4f}, τL={ts.tau_L:.4f}, "
                         f"τE={ts.tau_E:.4f}, α={ts.alpha:.4f}")
            table = separatrix.overlay_table(params, omega, times, a=ts.a)
            extra = {k: v for k, v in table.items() if k != "t"}
            summary["time_scales"] = ts.to_dict()
            summary.update(self._fit_summary(series, ts, squeeze_fraction > 0))

        csv_path = exporter.write_otoc_csv(ctx.output_dir / f"otoc{suffix}.csv", series, extra)
        ctx.outputs.append(csv_path)
        ctx.outputs.append(exporter.write_otoc_json(ctx.output_dir / f"otoc{suffix}.json", series,
                                                    {"backend": prop.backend, "operator": section["operator"]}))
        if ts is not None:
            ctx.outputs.append(exporter.write_overlay_csv(ctx.output_dir / f"overlay{suffix}.csv", table))
        if squeeze_fraction > 0:
            ctx.outputs.append(exporter.write_state_csv(ctx.output_dir / f"initial_state{suffix}.csv", state))
        self._maybe_plot_script(ctx, csv_path, "t", ["C"] + [k for k in extra if k != "regime"])
        return summary

    def _fit_summary(self, series, ts, squeezed: bool) -> dict:
        shrink = float(self.config["otoc"]["fit_shrink"])
        out: dict = {"fits": {}}
        windows = dict(zip(("double_rate", "single_rate"), analysis.fit_windows(ts, shrink)))
        if squeezed:
            pad = shrink / ts.lambda_s
            windows["full"] = (ts.tau_s + pad, ts.tau_E - pad)
        targets = {"double_rate": 2.0 * ts.lambda_s, "single_rate": ts.lambda_s, "full": 2.0 * ts.lambda_s}
        for name, window in windows.items():
            if window is None:
                out["fits"][name] = None
                continue
            try:
                fit = analysis.fit_exponent(series, window)
            except OtocDimerError as e:
                logging.warning(f"拟合窗口 {name} 失败: {e}")
                out["fits"][name] = {"error": str(e)}
                continue
            logging.info(f"拟合 {name}: [{window[0]:.3f}, {window[1]:.3f}] 斜率 {fit.slope:.5f} ± {fit.stderr:.5f}"
                         f" (目标 {targets[name]:.5f})")
            out["fits"][name] = {"window": list(fit.window), "slope": fit.slope, "stderr": fit.stderr,
                                 "r_squared": fit.r_squared, "n_points": fit.n_points,
                                 "ratio_to_target": fit.ratio_to(targets[name])}
        try:
            kink = analysis.detect_kink(series, (ts.tau_s, ts.tau_E), seed=int(self.config["seed"]))
            out["kink"] = {"found": kink.found, "time": kink.time, "error": kink.error,
                           "slope_before": kink.slope_before, "slope_after": kink.slope_after,
                           "message": kink.message}
        except OtocDimerError as e:
            logging.warning(f"拐点检测失败: {e}")
            out["kink"] = {"found": False, "message": str(e)}
        return out

    def cmd_otoc(self) -> RunContext:
        ctx = self._context("otoc")
        n_list = [int(n) for n in self.config["otoc"].get("n_list") or []] or [int(self.config["n_particles"])]
        summaries = {}
        for i, n in enumerate(n_list):
            self.update_progress(f"OTOC N={n}", 100.0 * i / len(n_list))
            suffix = "" if len(n_list) == 1 else f"_N{n}"
            summaries[str(n)] = self._run_otoc_single(ctx, self._params(n), suffix)
        ctx.outputs.append(exporter.write_json(ctx.output_dir / "otoc_summary.json", summaries))
        return ctx

    # ---- husimi ----------------------------------------------------------

    def cmd_husimi(self) -> RunContext:
        ctx = self._context("husimi")
        section = self.config["husimi"]
        params = self._params()
        prop = propagate.make_propagator(build_hamiltonian(params), resolved_backend(self.config))
        tau_e = separatrix.time_scales(params, float(self.config["omega"])).tau_E if params.is_unstable else None
        state, label = self._prepare_state(params, prop, float(section["squeeze_fraction"]), tau_e)

        frames = int(section["frames"])
        t_final = float(section["t_final_factor"]) * (tau_e if tau_e is not None else 1.0)
        times = np.linspace(0.0, t_final, frames) if frames > 1 else np.zeros(1)
        z_values, phi_values = phasespace.default_grid(int(section["nz"]), int(section["nphi"]))
        logging.info(f"Husimi 帧: {frames} 帧, t ∈ [0, {t_final:.4f}], 初态 {label}")

        def frame(t):
            evolved = propagate.evolve(prop, state, float(t))
            return phasespace.husimi(params, evolved, z_values, phi_values, time=float(t))

        grids = process_items_with_threads(list(times), frame, max_workers=resolve_max_workers(),
                                           description="Husimi 帧")
        index_rows = []
        for index, (t, grid) in enumerate(zip(times, grids)):
            if grid is None:
                raise ParameterError(f"第 {index} 帧计算失败，详见日志", "HUSIMI_FRAME")
            if section["format"] == "binary":
                path, header = exporter.write_husimi_binary(ctx.output_dir / f"husimi_{index:04d}.bin", grid)
                ctx.outputs.extend([path, header])
            else:
                ctx.outputs.append(exporter.write_husimi_csv(ctx.output_dir / f"husimi_{index:04d}.csv", grid))
            peak = grid.argmax()
            mean, cov = phasespace.husimi_moments(grid)
            index_rows.append((index, t, peak.z, peak.phi, mean[0], mean[1], cov[0, 0], cov[1, 1], cov[0, 1]))
        ctx.outputs.append(exporter.write_csv(
            ctx.output_dir / "frames.csv",
            ("frame", "t", "peak_z", "peak_phi", "mean_z", "mean_phi", "var_z", "var_phi", "cov_z_phi"),
            index_rows))
        return ctx

    # ---- scan ------------------------------------------------------------

    def cmd_scan(self) -> RunContext:
        ctx = self._context("scan")
        section = self.config["scan"]
        thetas = np.linspace(float(section["theta_min"]), float(section["theta_max"]), int(section["theta_points"]))
        n_list = [int(n) for n in section["n_list"]]
        rows = analysis.theta_scan(thetas, n_list, float(self.config["omega"]), resolved_backend(self.config),
                                   int(section["time_points"]), float(section["fit_shrink"]))
        csv_path = exporter.write_scan_csv(ctx.output_dir / "scan.csv", rows)
        ctx.outputs.append(csv_path)

        summary = {}
        for n in n_list:
            summary[str(n)] = analysis.scan_summary(rows, n)
            logging.info(f"N={n}: 相关系数 {summary[str(n)]['correlation']:.4f}, "
                         f"平均相对偏差 {summary[str(n)]['mean_relative_deviation']:.4f}")
        summary["ratios"] = [{"theta": r.theta, "N": r.n_particles, **analysis.compare_with_classical(r)}
                             for r in rows if r.ok]
        summary["failed_cells"] = [{"theta": r.theta, "N": r.n_particles, "message": r.message}
                                   for r in rows if not r.ok]
        ctx.outputs.append(exporter.write_json(ctx.output_dir / "scan_summary.json", summary))
        self._maybe_plot_script(ctx, csv_path, "theta", ["lambda_s", "slope_2w", "slope_1w"], yscale="linear")
        return ctx

    # ---- twa -------------------------------------------------------------

    def cmd_twa(self) -> RunContext:
        ctx = self._context("twa")
        section = self.config["twa"]
        params = self._params()
        omega = float(self.config["omega"])
        ts = separatrix.time_scales(params, omega)
        times = np.linspace(0.0, ts.tau_E, int(section["time_points"]))
        series = phasespace.twa_otoc(params, omega, params.n_particles, times, int(section["samples"]),
                                     int(self.config["seed"]), tol=float(section["tol"]))
        analytic = separatrix.classical_otoc(params, omega, params.n_particles, times, a=ts.a)
        with np.errstate(divide="ignore", invalid="ignore"):
            z_score = np.where(series.stderr > 0, (series.values - analytic) / series.stderr, 0.0)
        csv_path = exporter.write_otoc_csv(ctx.output_dir / "twa.csv", series,
                                           {"O_analytic": analytic, "z_score": z_score})
        ctx.outputs.append(csv_path)
        worst = float(np.max(np.abs(z_score)))
        logging.info(f"TWA 与解析经典 OTOC 最大偏差: {worst:.2f} 个标准误")
        ctx.outputs.append(exporter.write_json(ctx.output_dir / "twa_summary.json", {
            "time_scales": ts.to_dict(), "samples": int(section["samples"]), "max_abs_z_score": worst,
        }))
        self._maybe_plot_script(ctx, csv_path, "t", ["C", "O_analytic"])
        return ctx
