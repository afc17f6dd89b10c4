"""相空间方法：(z, φ) 上的 Husimi 分布、初始高斯 Wigner 函数采样与截断 Wigner (TWA) 经典 OTOC。"""

from __future__ import annotations
import logging
import math

import numpy as np
from scipy.linalg import expm

from utils.multithreading_utils import process_items_with_threads, resolve_max_workers
from .constants import HUSIMI_DEFAULT_GRID, TWA_CHUNK_SIZE, TWA_MAX_FAILURE_FRACTION
from .exceptions import IntegrationError, ParameterError, ServiceResult
from .hilbert import coherent_amplitudes
from .meanfield import jacobian, monodromy_batch, stability_exponent
from .models import DimerParams, OtocSeries, PhaseGrid, PhasePoint, StateVector


def default_grid(nz: int = HUSIMI_DEFAULT_GRID, nphi: int = HUSIMI_DEFAULT_GRID) -> tuple[np.ndarray, np.ndarray]:
    z = np.linspace(-1.0, 1.0, nz + 2)[1:-1]
    phi = np.linspace(-math.pi, math.pi, nphi, endpoint=False)
    return z, phi


def husimi(params: DimerParams, state: StateVector, z_values=None, phi_values=None,
           time: float = 0.0) -> PhaseGrid:
    """Q(z, φ) = |⟨ξ(z, φ)|ψ⟩|²，未归一化。"""
    if z_values is None or phi_values is None:
        z_default, phi_default = default_grid()
        z_values = z_default if z_values is None else z_values
        phi_values = phi_default if phi_values is None else phi_values
    z_values = np.asarray(z_values, dtype=np.float64)
    phi_values = np.asarray(phi_values, dtype=np.float64)
    n = params.n_particles
    if state.n_particles != n:
        raise ParameterError(f"态矢量维度 {state.amplitudes.size} 与 N={n} 不符", "STATE_DIM")

    k = np.arange(n + 1, dtype=np.float64)
    # φ = −π 时相干态振幅为实非负，即各 z 处的模
    moduli = np.stack([coherent_amplitudes(n, float(z), -math.pi) for z in z_values]).real
    weighted = moduli * state.amplitudes[None, :]
    # ⟨ξ| 的相位因子 e^{i(N−k)(φ+π)}
    phase = np.exp(1j * np.outer(phi_values + math.pi, n - k))
    overlaps = weighted @ phase.T
    return PhaseGrid(z_values, phi_values, np.abs(overlaps) ** 2, time)


def husimi_moments(grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    """(z, φ) 的均值与协方差 (以 Husimi 密度为权重)。"""
    weights = grid.density / grid.density.sum()
    zz, pp = np.meshgrid(grid.z_values, grid.phi_values, indexing="ij")
    mean = np.array([np.sum(weights * zz), np.sum(weights * pp)])
    dz, dp = zz - mean[0], pp - mean[1]
    cov = np.array([
        [np.sum(weights * dz * dz), np.sum(weights * dz * dp)],
        [np.sum(weights * dz * dp), np.sum(weights * dp * dp)],
    ])
    return mean, cov


def effective_scale_a(params: DimerParams, t0: float, omega: float = 1.0) -> float:
    """反向演化 t0 后的等效尺度 a。

    初始 Wigner 协方差 diag(ω/N, 1/(ωN)) 经 (0, 0) 处线性化单值矩阵 M(t0) 传播，
    再投影到左不稳定本征向量 d = (1/2, −2J/λs) 上；dᵀM(t0) = e^{λs t0} dᵀ。
    """
    lam = stability_exponent(params)
    if lam <= 0:
        raise ParameterError("稳定区无不稳定方向", "STABLE_REGIME")
    if not omega > 0:
        raise ParameterError(f"压缩参数 ω 必须为正: {omega}", "OMEGA")
    n = params.n_particles
    c, u = params.j_hop, 0.5 * params.g_int * n
    m = expm(jacobian(params, PhasePoint(0.0, 0.0)) * t0)
    cov = m @ np.diag([omega / n, 1.0 / (omega * n)]) @ m.T
    direction = np.array([0.5, -2.0 * c / lam])
    var = float(direction @ cov @ direction)
    return (u / lam) * math.sqrt(var / 2.0)


def wigner_sample_arrays(params: DimerParams, omega: float, count: int, seed: int | None,
                         center: PhasePoint = PhasePoint(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    if not omega > 0:
        raise ParameterError(f"压缩参数 ω 必须为正: {omega}", "OMEGA")
    n = params.n_particles
    rng = np.random.default_rng(seed)
    n_dev = rng.normal(0.0, math.sqrt(omega * n / 4.0), size=count)
    phi = rng.normal(center.phi, 1.0 / math.sqrt(omega * n), size=count)
    z = center.z + 2.0 * n_dev / n
    return z, phi


def wigner_sample(params: DimerParams, omega: float, count: int, seed: int | None) -> list[PhasePoint]:
    """从 W(n, φ) ∝ exp(−2n²/(ωN) − Nωφ²/2) 抽样，返回 z = 2n/N。"""
    z, phi = wigner_sample_arrays(params, omega, count, seed)
    return [PhasePoint(float(a), float(b)) for a, b in zip(z, phi)]


def _integrate_chunk(params: DimerParams, z0: np.ndarray, phi0: np.ndarray,
                     times: np.ndarray, tol: float) -> ServiceResult[np.ndarray]:
    try:
        return ServiceResult.ok(monodromy_batch(params, z0, phi0, times, tol))
    except IntegrationError as e:
        logging.debug(f"批量积分失败 ({e})，改为逐样本积分")

    rows = np.full((z0.size, times.size), np.nan)
    failures = 0
    for i in range(z0.size):
        try:
            rows[i] = monodromy_batch(params, z0[i:i + 1], phi0[i:i + 1], times, tol)[0]
        except IntegrationError:
            failures += 1
    return ServiceResult(success=failures == 0, data=rows, message=f"{failures} 个样本积分失败", extra=failures)


def twa_otoc(params: DimerParams, omega: float, n_particles: int, times, count: int, seed: int | None,
             tol: float = 1e-8, chunk_size: int = TWA_CHUNK_SIZE) -> OtocSeries:
    """O_MC(t) = ⟨(∂n_t/∂φ₀)²⟩_W，∂n_t/∂φ₀ = (N/2)·m[0][1]。附每个时间点的标准误。"""
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ParameterError("时间网格必须非负且升序", "TIME_GRID")
    if count < 2:
        raise ParameterError("样本数至少为 2", "SAMPLES")
    params_n = params.with_n(n_particles)
    z0, phi0 = wigner_sample_arrays(params_n, omega, count, seed)
    chunks = [(start, min(start + chunk_size, count)) for start in range(0, count, chunk_size)]
    logging.info(f"TWA OTOC: {count} 个样本, {len(chunks)} 个批次, 时间点 {times.size}")

    def run_chunk(bounds):
        lo, hi = bounds
        return _integrate_chunk(params_n, z0[lo:hi], phi0[lo:hi], times, tol)

    results = process_items_with_threads(chunks, run_chunk, max_workers=resolve_max_workers(),
                                         description="TWA 批次积分")

    total = np.zeros(times.size)
    total_sq = np.zeros(times.size)
    used = 0
    failures = 0
    for result in results:
        if result is None:
            raise IntegrationError("TWA 批次执行异常，详见日志", "TWA_CHUNK")
        rows = result.data
        if not result.success:
            failures += int(result.extra)
        good = rows[np.all(np.isfinite(rows), axis=1)]
        deriv_sq = (0.5 * n_particles * good) ** 2
        total += deriv_sq.sum(axis=0)
        total_sq += (deriv_sq ** 2).sum(axis=0)
        used += good.shape[0]

    if failures:
        logging.warning(f"TWA: {failures}/{count} 个样本积分失败")
    if failures > TWA_MAX_FAILURE_FRACTION * count:
        raise IntegrationError(f"TWA 失败样本比例过高: {failures}/{count}", "TWA_FAILURES")

    mean = total / used
    var = np.maximum(total_sq / used - mean ** 2, 0.0) * used / max(used - 1, 1)
    stderr = np.sqrt(var / used)
    return OtocSeries(times, mean, params_n, f"twa omega={omega:g} samples={used}", stderr)
