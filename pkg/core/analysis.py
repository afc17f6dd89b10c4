"""OTOC 指数拟合、拐点检测以及 Θ/N 参数扫描。"""

from __future__ import annotations
import logging
import math

import numpy as np
from scipy.stats import linregress, pearsonr

from utils.multithreading_utils import process_items_with_threads, resolve_max_workers
from .constants import FIT_WINDOW_SHRINK, KINK_BOOTSTRAP_SAMPLES, MIN_FIT_POINTS, OTOC_FLOOR_RELATIVE
from .exceptions import FitError, OtocDimerError
from .hilbert import build_hamiltonian, coherent_state
from .models import DimerParams, FitResult, KinkResult, OtocSeries, ScanRow, TimeScales
from .meanfield import stability_exponent
from . import propagate, separatrix

SLOW_RATE_THRESHOLD = 0.1
KINK_MIN_RELATIVE_CHANGE = 0.3
_KINK_EDGE_POINTS = 3


def _log_values(series: OtocSeries, values: np.ndarray) -> np.ndarray:
    peak = float(np.max(series.values)) if series.values.size else 0.0
    if not peak > 0:
        raise FitError("序列中没有正值，无法取对数", "FIT_NONPOSITIVE")
    floored = np.maximum(values, OTOC_FLOOR_RELATIVE * peak)
    return np.log(floored)


def fit_exponent(series: OtocSeries, window: tuple[float, float]) -> FitResult:
    """ln C(t) 对 t 的普通最小二乘；slope 即 C(t) ~ e^{slope·t} 中的速率。"""
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise FitError(f"拟合窗口无效: [{t_lo}, {t_hi}]", "FIT_WINDOW")
    part = series.restricted(t_lo, t_hi)
    positive = part.values > 0
    if np.count_nonzero(positive) < MIN_FIT_POINTS:
        raise FitError(
            f"窗口 [{t_lo:.3f}, {t_hi:.3f}] 内正值点数不足 ({np.count_nonzero(positive)} < {MIN_FIT_POINTS})",
            "FIT_POINTS")
    y = _log_values(series, part.values)
    res = linregress(part.times, y)
    return FitResult(
        window=(float(t_lo), float(t_hi)),
        slope=float(res.slope),
        intercept=float(res.intercept),
        stderr=float(max(res.stderr, 0.0)),
        r_squared=float(res.rvalue ** 2),
        n_points=int(part.times.size),
    )


def fit_windows(ts: TimeScales, shrink: float = FIT_WINDOW_SHRINK):
    """[τs, τL] 与 [τL, τE] 两侧各向内收缩 shrink/λs；空窗口返回 None。"""
    pad = shrink / ts.lambda_s
    double = (ts.tau_s + pad, min(ts.tau_L, ts.tau_E) - pad)
    single = (max(ts.tau_L, ts.tau_s) + pad, ts.tau_E - pad)
    return (double if double[0] < double[1] else None,
            single if single[0] < single[1] else None)


def _breakpoint_scan(t: np.ndarray, y: np.ndarray, w: np.ndarray, candidates: np.ndarray):
    """连续两段线性模型 y = b0 + b1 t + b2 max(t − τ, 0) 在所有候选 τ 上的加权最小二乘。"""
    hinge = np.maximum(t[None, :] - candidates[:, None], 0.0)
    ones = np.ones_like(t)
    s_11, s_1t, s_tt = w.sum(), (w * t).sum(), (w * t * t).sum()
    s_1h = hinge @ w
    s_th = hinge @ (w * t)
    s_hh = (hinge * hinge) @ w
    k = candidates.size
    gram = np.empty((k, 3, 3))
    gram[:, 0, 0], gram[:, 0, 1], gram[:, 1, 1] = s_11, s_1t, s_tt
    gram[:, 0, 2] = gram[:, 2, 0] = s_1h
    gram[:, 1, 2] = gram[:, 2, 1] = s_th
    gram[:, 1, 0] = s_1t
    gram[:, 2, 2] = s_hh
    rhs = np.empty((k, 3))
    rhs[:, 0] = (w * y * ones).sum()
    rhs[:, 1] = (w * y * t).sum()
    rhs[:, 2] = hinge @ (w * y)
    # 自助法权重可能使某些候选的 Gram 矩阵奇异
    coef = (np.linalg.pinv(gram) @ rhs[..., None])[..., 0]
    ssr = (w * y * y).sum() - np.einsum("ij,ij->i", coef, rhs)
    return coef, np.maximum(ssr, 0.0), gram


def detect_kink(series: OtocSeries, search_window: tuple[float, float],
                bootstrap: int = KINK_BOOTSTRAP_SAMPLES, seed: int = 0,
                min_relative_change: float = KINK_MIN_RELATIVE_CHANGE) -> KinkResult:
    part = series.restricted(*search_window)
    t = part.times
    if t.size < 2 * _KINK_EDGE_POINTS + 3:
        raise FitError(f"拐点搜索窗口内点数不足: {t.size}", "KINK_POINTS")
    y = _log_values(series, part.values)
    candidates = t[_KINK_EDGE_POINTS:-_KINK_EDGE_POINTS]
    weights = np.ones_like(t)

    coef, ssr, gram = _breakpoint_scan(t, y, weights, candidates)
    best = int(np.argmin(ssr))
    b1, b2 = coef[best, 1], coef[best, 2]
    dof = max(t.size - 3, 1)
    sigma2 = ssr[best] / dof
    cov = sigma2 * np.linalg.inv(gram[best])
    change_err = math.sqrt(max(cov[2, 2], 0.0))
    slope_before, slope_after = float(b1), float(b1 + b2)

    significant = abs(b2) > 2.0 * change_err and abs(b2) > min_relative_change * abs(b1)
    if not significant:
        logging.info(f"未检测到显著拐点: 斜率 {slope_before:.4f} → {slope_after:.4f}")
        return KinkResult(False, slope_before=slope_before, slope_after=slope_after, message="no kink")

    rng = np.random.default_rng(seed)
    estimates = np.empty(bootstrap)
    for i in range(bootstrap):
        counts = rng.multinomial(t.size, np.full(t.size, 1.0 / t.size)).astype(np.float64)
        _, boot_ssr, _ = _breakpoint_scan(t, y, counts, candidates)
        estimates[i] = candidates[int(np.argmin(boot_ssr))]
    kink_time = float(candidates[best])
    kink_err = float(np.std(estimates, ddof=1)) if bootstrap > 1 else 0.0
    logging.info(f"拐点: t = {kink_time:.3f} ± {kink_err:.3f}, 斜率 {slope_before:.4f} → {slope_after:.4f}")
    return KinkResult(True, kink_time, kink_err, slope_before, slope_after)


def compare_with_classical(row: ScanRow) -> dict[str, float]:
    lam = row.lambda_s_classical
    out = {}
    if row.fit_2ls_window is not None:
        out["ratio_2w"] = row.fit_2ls_window.ratio_to(2.0 * lam)
    if row.fit_1ls_window is not None:
        out["ratio_1w"] = row.fit_1ls_window.ratio_to(lam)
    return out


def _scan_cell(cell: tuple[float, int], omega: float, backend: str | None,
               time_points: int, shrink: float) -> ScanRow:
    theta, n = cell
    params = DimerParams(theta, n)
    lam = stability_exponent(params)
    row = ScanRow(theta, n, lam)
    if lam <= 0:
        row.message = "stable regime"
        return row
    row.slow_rate = lam < SLOW_RATE_THRESHOLD
    try:
        ts = separatrix.time_scales(params, omega)
        prop = propagate.make_propagator(build_hamiltonian(params), backend)
        times = propagate.default_time_grid(ts.tau_E, time_points)
        series = propagate.otoc(prop, coherent_state(params, 0.0, 0.0), times, params, "coherent(0,0)")
        w2, w1 = fit_windows(ts, shrink)
        messages = []
        for attr, window in (("fit_2ls_window", w2), ("fit_1ls_window", w1)):
            if window is None:
                messages.append(f"{attr}: empty window")
                continue
            try:
                setattr(row, attr, fit_exponent(series, window))
            except FitError as e:
                messages.append(f"{attr}: {e}")
        try:
            row.kink = detect_kink(series, (ts.tau_s, ts.tau_E))
        except FitError as e:
            messages.append(f"kink: {e}")
        row.message = "; ".join(messages)
    except OtocDimerError as e:
        logging.error(f"扫描单元 Θ={theta:.4f}, N={n} 失败: {e}")
        row.message = str(e)
    return row


def theta_scan(theta_grid, n_list, omega: float = 1.0, backend: str | None = None,
               time_points: int = 400, shrink: float = FIT_WINDOW_SHRINK) -> list[ScanRow]:
    cells = sorted((float(theta), int(n)) for theta in theta_grid for n in n_list)
    logging.info(f"参数扫描: {len(cells)} 个单元 (Θ × N)")

    def run(cell):
        return _scan_cell(cell, omega, backend, time_points, shrink)

    rows = process_items_with_threads(cells, run, max_workers=resolve_max_workers(), description="Θ 扫描")
    out = []
    for cell, row in zip(cells, rows):
        if row is None:
            row = ScanRow(cell[0], cell[1], float("nan"), message="cell crashed")
        out.append(row)
    return out


def scan_summary(rows: list[ScanRow], n_particles: int | None = None) -> dict[str, float]:
    """拟合斜率与经典目标 (2λs, λs) 的相关系数及平均相对偏差。"""
    fitted, target = [], []
    for row in rows:
        if n_particles is not None and row.n_particles != n_particles:
            continue
        if row.fit_2ls_window is not None:
            fitted.append(row.fit_2ls_window.slope)
            target.append(2.0 * row.lambda_s_classical)
        if row.fit_1ls_window is not None:
            fitted.append(row.fit_1ls_window.slope)
            target.append(row.lambda_s_classical)
    if len(fitted) < 3:
        return {"correlation": float("nan"), "mean_relative_deviation": float("nan"), "count": len(fitted)}
    fitted_arr, target_arr = np.asarray(fitted), np.asarray(target)
    return {
        "correlation": float(pearsonr(fitted_arr, target_arr)[0]),
        "mean_relative_deviation": float(np.mean(np.abs(fitted_arr / target_arr - 1.0))),
        "count": len(fitted),
    }
