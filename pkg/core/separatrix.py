"""分界线上的闭式解、解析经典 OTOC O(t) 及其渐近式与时间尺度。"""

from __future__ import annotations
import logging
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .constants import QUADRATURE_NODES
from .exceptions import ParameterError, QuadratureError
from .meanfield import stability_exponent
from .models import DimerParams, PhasePoint, Regime, TimeScales

_QUADRATURE_REL_TOL = 1e-6
_NODES_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _nodes(count: int) -> tuple[np.ndarray, np.ndarray]:
    if count not in _NODES_CACHE:
        x, w = leggauss(count)
        # 映射到 (−π/2, π/2)
        _NODES_CACHE[count] = (0.5 * math.pi * x, 0.5 * math.pi * w)
    return _NODES_CACHE[count]


def _unstable(params: DimerParams) -> tuple[float, float, float]:
    lam = stability_exponent(params)
    if lam <= 0:
        raise ParameterError(
            f"Θ={params.theta:.4f} 处于稳定区 (γ ≤ 2)，分界线解析不适用", "STABLE_REGIME")
    return lam, params.j_hop, 0.5 * params.g_int * params.n_particles


def scale_a(params: DimerParams, omega: float = 1.0) -> float:
    lam, c, u = _unstable(params)
    if not omega > 0:
        raise ParameterError(f"压缩参数 ω 必须为正: {omega}", "OMEGA")
    n = params.n_particles
    return (u / lam) / math.sqrt(8.0 * omega * n) * math.sqrt(omega ** 2 + 16.0 * c ** 2 / lam ** 2)


def otoc_short_asymptote(params: DimerParams, n_particles: int, t):
    lam, c, _ = _unstable(params)
    t = np.asarray(t, dtype=np.float64)
    return 4.0 * c ** 2 * (n_particles ** 2 / lam ** 2) * np.sinh(lam * t) ** 2


def otoc_long_asymptote(params: DimerParams, omega: float, n_particles: int, t, a: float | None = None):
    lam, c, _ = _unstable(params)
    if a is None:
        a = scale_a(params.with_n(n_particles), omega)
    t = np.asarray(t, dtype=np.float64)
    return c ** 2 * math.sqrt(math.pi) * n_particles ** 2 / (4.0 * a * lam ** 2) * np.exp(lam * t)


def asymptote_crossing_time(params: DimerParams, omega: float = 1.0, a: float | None = None) -> float:
    """短时与长时渐近式相交的时刻，与 τL 相差 O(1/λs) 常数。"""
    lam, _, _ = _unstable(params)
    n = params.n_particles
    if a is None:
        a = scale_a(params, omega)

    def gap(t):
        return (math.log(otoc_short_asymptote(params, n, t))
                - math.log(otoc_long_asymptote(params, omega, n, t, a=a)))

    lo, hi = 1e-6 / lam, 60.0 / lam
    if gap(lo) * gap(hi) > 0:
        raise ParameterError("渐近式在搜索区间内不相交", "CROSSING")
    return float(brentq(gap, lo, hi, xtol=1e-12))


def time_scales(params: DimerParams, omega: float = 1.0, a: float | None = None) -> TimeScales:
    lam, _, _ = _unstable(params)
    if a is None:
        a = scale_a(params, omega)
    n = params.n_particles
    tau_s = 1.0 / lam
    tau_l = -math.log(a) / lam
    tau_e = math.log(n) / lam if n > 1 else float("nan")
    alpha = tau_l / tau_e if n > 1 else float("nan")
    if not 0 < a < 1:
        logging.warning(f"尺度 a={a:.4g} 不在 (0, 1) 内，τL 非正")
    if alpha > 1:
        logging.warning(f"α = τL/τE = {alpha:.3f} > 1，属于非物理情形")
    try:
        tau_cross = asymptote_crossing_time(params, omega, a=a)
    except ParameterError:
        tau_cross = None
    return TimeScales(lam, omega, a, tau_s, tau_l, tau_e, alpha, n, params.theta, tau_cross)


def separatrix_z(params: DimerParams, z_start: float, t_elapsed):
    lam, _, u = _unstable(params)
    z_max = lam / u
    if z_start == 0 or abs(z_start) > z_max * (1 + 1e-12):
        raise ParameterError(f"起点 z={z_start} 不在分界线上 (0 < |z| ≤ {z_max:.6g})", "OFF_SEPARATRIX")
    shift = math.acosh(max(z_max / abs(z_start), 1.0))
    t = np.asarray(t_elapsed, dtype=np.float64)
    return math.copysign(1.0, z_start) * z_max / np.cosh(shift - lam * t)


def separatrix_phi(params: DimerParams, z):
    """分界线能量壳上给定 z 的相位 φ ≥ 0 分支。"""
    _, c, u = _unstable(params)
    z = np.asarray(z, dtype=np.float64)
    cos_phi = (2.0 * c - 0.5 * u * z * z) / (2.0 * c * np.sqrt(1.0 - z * z))
    return np.arccos(np.clip(cos_phi, -1.0, 1.0))


def separatrix_polyline(params: DimerParams, samples: int = 400) -> list[PhasePoint]:
    """分界线的四条分支 (±z, ±φ)，均经过双曲不动点 (0, 0)。"""
    lam, _, u = _unstable(params)
    z_max = lam / u
    s = np.linspace(0.0, 0.5 * math.pi, samples)
    z_half = z_max * np.sin(s)
    phi_half = separatrix_phi(params, z_half)
    points: list[PhasePoint] = []
    for z_sign in (1.0, -1.0):
        for phi_sign in (1.0, -1.0):
            points.extend(PhasePoint(float(z_sign * z), float(phi_sign * p)) for z, p in zip(z_half, phi_half))
    return points


def x_of_t(params: DimerParams, n0, phi0, n_particles: int, t, exponential: bool = False):
    lam, c, u = _unstable(params)
    growth = 0.5 * np.exp(lam * np.asarray(t)) if exponential else np.sinh(lam * np.asarray(t))
    return (u / lam) * (np.asarray(n0) / n_particles - 2.0 * c * np.asarray(phi0) / lam) * growth


def n_of_t(params: DimerParams, n0, phi0, n_particles: int, t, exponential: bool = False):
    """分界线近似下的 n_t；exponential=True 时以 e^{λs t}/2 代替 sinh(λs t)。"""
    lam, _, u = _unstable(params)
    x = x_of_t(params, n0, phi0, n_particles, t, exponential)
    return (n_particles * lam / u) * x / (1.0 + x * x)


def _otoc_integral(width: float, nodes: int) -> float:
    theta, weights = _nodes(nodes)
    scale = min(width, 1.0)
    x = scale * np.tan(theta)
    jac = scale / np.cos(theta) ** 2
    integrand = (1.0 - x * x) ** 2 / (1.0 + x * x) ** 4 * np.exp(-(x / width) ** 2) * jac
    return float(np.dot(weights, integrand))


def bare_integral(nodes: int = QUADRATURE_NODES) -> float:
    """∫(1−x²)²/(1+x²)⁴ dx，精确值 π/4。"""
    return _otoc_integral(math.inf, nodes)


def classical_otoc(params: DimerParams, omega: float, n_particles: int, t, a: float | None = None):
    """分界线近似下的解析经典 OTOC O(t)，对 Wigner 高斯初态平均。"""
    lam, c, _ = _unstable(params)
    if a is None:
        a = scale_a(params.with_n(n_particles), omega)
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < 0):
        raise ParameterError("经典 OTOC 仅定义于 t ≥ 0", "TIME")
    prefactor = 2.0 * c ** 2 * n_particles ** 2 / (math.sqrt(math.pi) * a * lam ** 2)
    out = np.zeros_like(t_arr)
    for i, ti in enumerate(t_arr):
        if ti == 0:
            continue
        sh = math.sinh(lam * ti)
        width = 2.0 * a * sh
        fine = _otoc_integral(width, QUADRATURE_NODES)
        coarse = _otoc_integral(width, QUADRATURE_NODES // 2)
        err = abs(fine - coarse)
        if err > _QUADRATURE_REL_TOL * abs(fine):
            raise QuadratureError(
                f"求积未收敛: t={ti:.4f}, 积分={fine:.6e}, 误差估计={err:.2e}", "QUAD_CONVERGE")
        out[i] = prefactor * sh * fine
    return out if np.ndim(t) else float(out[0])


def regime_schedule(ts: TimeScales, t: float) -> str:
    if t < ts.tau_s:
        return Regime.POLYNOMIAL
    if t >= ts.tau_E:
        return Regime.POST_EHRENFEST
    if t < ts.tau_L:
        return Regime.DOUBLE_RATE
    return Regime.SINGLE_RATE


def overlay_table(params: DimerParams, omega: float, times, a: float | None = None) -> dict[str, np.ndarray | list]:
    """叠加绘图用的列: t, O, O_short, O_long, regime。"""
    times = np.asarray(times, dtype=np.float64)
    n = params.n_particles
    ts = time_scales(params, omega, a=a)
    return {
        "t": times,
        "O": classical_otoc(params, omega, n, times, a=ts.a),
        "O_short": otoc_short_asymptote(params, n, times),
        "O_long": otoc_long_asymptote(params, omega, n, times, a=ts.a),
        "regime": [regime_schedule(ts, float(t)) for t in times],
    }
