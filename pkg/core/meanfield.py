"""平均场极限：约化坐标 (z, φ) 的经典动力学、切映射 (monodromy)、不动点与稳定性。

运动方程直接取约化形式
    dz/dt = −4J √(1−z²) sin φ
    dφ/dt =  4J z cos φ / √(1−z²) − 2U z
其中 J = ε₀ cos Θ，U = gN/2 = ε₀ sin Θ。Jacobian 由这组方程解析求导得到。
"""

from __future__ import annotations
import logging
import math

import numpy as np
from scipy.integrate import solve_ivp

from .constants import (
    FIXED_POINT_MERGE_DISTANCE, FIXED_POINT_SEED_GRID, NEWTON_MAX_ITERATIONS, Z_SINGULARITY_MARGIN,
)
from .exceptions import IntegrationError, ParameterError, ServiceResult
from .models import DimerParams, FixedPointKind, FixedPointReport, PhasePoint, Trajectory

MARGINAL = "marginal"
_MARGINAL_THRESHOLD = 1e-7
_DEFAULT_SAMPLES = 201


def _couplings(params: DimerParams) -> tuple[float, float]:
    return params.j_hop, 0.5 * params.g_int * params.n_particles


def classical_energy(params: DimerParams, p: PhasePoint) -> float:
    """单粒子能量 h(z, φ)。"""
    if abs(p.z) > 1.0:
        raise ParameterError(f"|z| > 1: {p.z}", "PHASE_Z")
    return float(energy_array(params, np.asarray(p.z), np.asarray(p.phi)))


def energy_array(params: DimerParams, z, phi):
    c, u = _couplings(params)
    z = np.asarray(z, dtype=np.float64)
    return 2.0 * c * np.sqrt(np.clip(1.0 - z * z, 0.0, None)) * np.cos(phi) + u * (0.5 * z * z + 0.5)


def separatrix_energy(params: DimerParams) -> float:
    return classical_energy(params, PhasePoint(0.0, 0.0))


def _flow(params: DimerParams, z, phi):
    c, u = _couplings(params)
    root = np.sqrt(1.0 - z * z)
    dz = -4.0 * c * root * np.sin(phi)
    dphi = 4.0 * c * z * np.cos(phi) / root - 2.0 * u * z
    return dz, dphi


def _jacobian_entries(params: DimerParams, z, phi):
    c, u = _couplings(params)
    one_minus = 1.0 - z * z
    root = np.sqrt(one_minus)
    sin_phi, cos_phi = np.sin(phi), np.cos(phi)
    j00 = 4.0 * c * z * sin_phi / root
    j01 = -4.0 * c * root * cos_phi
    j10 = 4.0 * c * cos_phi / (one_minus * root) - 2.0 * u
    j11 = -j00
    return j00, j01, j10, j11


def eom(params: DimerParams, p: PhasePoint) -> tuple[float, float]:
    if abs(p.z) >= 1.0:
        raise IntegrationError(f"|z| = 1 处 dφ/dt 奇异: z={p.z}", "EOM_SINGULAR")
    dz, dphi = _flow(params, p.z, p.phi)
    return float(dz), float(dphi)


def jacobian(params: DimerParams, p: PhasePoint) -> np.ndarray:
    if abs(p.z) >= 1.0:
        raise IntegrationError(f"|z| = 1 处 Jacobian 奇异: z={p.z}", "EOM_SINGULAR")
    j00, j01, j10, j11 = _jacobian_entries(params, p.z, p.phi)
    return np.array([[j00, j01], [j10, j11]], dtype=np.float64)


def _singularity_event(batch: int):
    limit = 1.0 - Z_SINGULARITY_MARGIN

    def event(_t, y):
        return limit - np.max(np.abs(y[:batch]))
    event.terminal = True
    return event


def _variational_rhs(params: DimerParams, batch: int):
    def rhs(_t, y):
        z, phi = y[:batch], y[batch:2 * batch]
        m = y[2 * batch:].reshape(4, batch)
        dz, dphi = _flow(params, z, phi)
        j00, j01, j10, j11 = _jacobian_entries(params, z, phi)
        dm = np.empty_like(m)
        dm[0] = j00 * m[0] + j01 * m[2]
        dm[1] = j00 * m[1] + j01 * m[3]
        dm[2] = j10 * m[0] + j11 * m[2]
        dm[3] = j10 * m[1] + j11 * m[3]
        return np.concatenate([dz, dphi, dm.ravel()])
    return rhs


def _plain_rhs(params: DimerParams, batch: int):
    def rhs(_t, y):
        dz, dphi = _flow(params, y[:batch], y[batch:])
        return np.concatenate([dz, dphi])
    return rhs


def _solve(params: DimerParams, z0: np.ndarray, phi0: np.ndarray, t_eval: np.ndarray,
           tol: float, with_monodromy: bool):
    if tol <= 0:
        raise ParameterError(f"积分容差必须为正: {tol}", "TOL")
    batch = z0.size
    if np.any(np.abs(z0) >= 1.0 - Z_SINGULARITY_MARGIN):
        raise IntegrationError("初始点过于接近 |z| = 1 奇点", "Z_SINGULAR")
    y0 = [z0, phi0]
    if with_monodromy:
        eye = np.zeros((4, batch))
        eye[0] = eye[3] = 1.0
        y0.append(eye.ravel())
        rhs = _variational_rhs(params, batch)
    else:
        rhs = _plain_rhs(params, batch)
    y0 = np.concatenate(y0)

    t_final = float(t_eval[-1])
    if t_final == 0.0:
        return y0[:, None].repeat(t_eval.size, axis=1)

    sol = solve_ivp(
        rhs, (0.0, t_final), y0, method="DOP853", t_eval=t_eval,
        rtol=tol, atol=tol, events=_singularity_event(batch),
    )
    if sol.status == 1:
        raise IntegrationError(
            f"轨道在 t={sol.t_events[0][0]:.4f} 到达 |z| → 1 奇点，积分中止", "Z_SINGULAR")
    if sol.status != 0:
        raise IntegrationError(f"积分失败 (步长下溢?): {sol.message}", "STEP_UNDERFLOW")
    return sol.y


def _sample_times(t_final: float, t_eval) -> np.ndarray:
    if t_final < 0:
        raise ParameterError(f"积分终止时间必须非负: {t_final}", "TIME")
    if t_eval is None:
        return np.linspace(0.0, t_final, _DEFAULT_SAMPLES)
    t_eval = np.asarray(t_eval, dtype=np.float64)
    if t_eval[0] != 0.0:
        t_eval = np.concatenate([[0.0], t_eval])
    return t_eval


def integrate(params: DimerParams, p0: PhasePoint, t_final: float, tol: float = 1e-10,
              t_eval=None) -> Trajectory:
    """自适应嵌入式 Runge-Kutta (DOP853) 积分经典轨道。"""
    times = _sample_times(t_final, t_eval)
    y = _solve(params, np.array([p0.z]), np.array([p0.phi]), times, tol, with_monodromy=False)
    z, phi = y[0], y[1]
    return Trajectory(times, z, phi, energy_array(params, z, phi))


def monodromy(params: DimerParams, p0: PhasePoint, t_final: float, tol: float = 1e-10,
              t_eval=None) -> Trajectory:
    """与变分方程 dM/dt = J(x(t))·M 共同积分，M(0) = 1。"""
    times = _sample_times(t_final, t_eval)
    y = _solve(params, np.array([p0.z]), np.array([p0.phi]), times, tol, with_monodromy=True)
    z, phi = y[0], y[1]
    frames = y[2:6].T.reshape(-1, 2, 2)
    return Trajectory(times, z, phi, energy_array(params, z, phi), frames)


def monodromy_batch(params: DimerParams, z0: np.ndarray, phi0: np.ndarray, times,
                    tol: float = 1e-8) -> np.ndarray:
    """批量共同积分，返回 m[0][1] = ∂z_t/∂φ₀，形状 (样本数, 时间点数)。"""
    z0 = np.asarray(z0, dtype=np.float64)
    phi0 = np.asarray(phi0, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    batch = z0.size
    y = _solve(params, z0, phi0, _sample_times(float(times[-1]), times), tol, with_monodromy=True)
    m01 = y[2 * batch + batch:2 * batch + 2 * batch]
    if times[0] != 0.0:
        m01 = m01[:, 1:]
    return m01


def stability_exponent(params: DimerParams) -> float:
    """λs = 4J √(γ/2 − 1)，γ ≤ 2 (稳定区) 时返回 0。"""
    c, u = _couplings(params)
    if c <= 0:
        return 0.0
    gamma = u / c
    if gamma <= 2.0:
        return 0.0
    return 4.0 * c * math.sqrt(gamma / 2.0 - 1.0)


def antihom_classification(params: DimerParams) -> str:
    return FixedPointKind.HYPERBOLIC if stability_exponent(params) > 0 else FixedPointKind.STABLE_CENTER


def numerical_exponent(params: DimerParams, p: PhasePoint) -> float:
    """不动点处 Jacobian 本征值的最大实部。"""
    eigvals = np.linalg.eigvals(jacobian(params, p))
    return float(np.max(eigvals.real))


def linearized_evolution(params: DimerParams, z0: float, phi0: float, t: float) -> tuple[float, float]:
    lam = stability_exponent(params)
    if lam <= 0:
        raise ParameterError(f"稳定区 (γ ≤ 2) 无线性化双曲解: Θ={params.theta}", "STABLE_REGIME")
    c, _ = _couplings(params)
    ch, sh = math.cosh(lam * t), math.sinh(lam * t)
    z_t = z0 * ch - (4.0 * c * phi0 / lam) * sh
    phi_t = phi0 * ch - (lam * z0 / (4.0 * c)) * sh
    return z_t, phi_t


def _classify(params: DimerParams, point: PhasePoint, label: str) -> FixedPointReport:
    jac = jacobian(params, point)
    eigvals = np.linalg.eigvals(jac)
    re_max = float(np.max(eigvals.real))
    im_max = float(np.max(np.abs(eigvals.imag)))
    if re_max > _MARGINAL_THRESHOLD:
        kind, exponent = FixedPointKind.HYPERBOLIC, re_max
    elif im_max > _MARGINAL_THRESHOLD:
        kind, exponent = FixedPointKind.STABLE_CENTER, im_max
    else:
        kind, exponent = MARGINAL, 0.0
    return FixedPointReport(point, kind, exponent, jac, label)


def _newton_polish(params: DimerParams, z: np.ndarray, phi: np.ndarray):
    limit = 1.0 - 1e-9
    converged = np.zeros(z.size, dtype=bool)
    for _ in range(NEWTON_MAX_ITERATIONS):
        active = ~converged & (np.abs(z) < limit)
        if not np.any(active):
            break
        za, pa = z[active], phi[active]
        f1, f2 = _flow(params, za, pa)
        j00, j01, j10, j11 = _jacobian_entries(params, za, pa)
        det = j00 * j11 - j01 * j10
        with np.errstate(divide="ignore", invalid="ignore"):
            dz = (j11 * f1 - j01 * f2) / det
            dp = (-j10 * f1 + j00 * f2) / det
        bad = ~np.isfinite(dz) | ~np.isfinite(dp)
        dz[bad] = 0.0
        dp[bad] = 0.0
        z[active] = za - dz
        phi[active] = pa - dp
        step = np.hypot(dz, dp)
        done = (step < 1e-13) & ~bad
        idx = np.nonzero(active)[0]
        converged[idx[done]] = True
        z = np.clip(z, -limit, limit)
    return z, phi, converged


def find_fixed_points(params: DimerParams) -> list[FixedPointReport]:
    """均匀 (0, π) 与反均匀 (0, 0) 不动点，加上在粗网格上 Newton 迭代找到的其他不动点。"""
    reports = [
        _classify(params, PhasePoint(0.0, 0.0), "antihom"),
        _classify(params, PhasePoint(0.0, math.pi), "hom"),
    ]
    known = [r.location for r in reports]

    grid = FIXED_POINT_SEED_GRID
    zs = np.linspace(-0.98, 0.98, grid)
    phis = np.linspace(-math.pi, math.pi, grid, endpoint=False)
    zz, pp = np.meshgrid(zs, phis, indexing="ij")
    z, phi, converged = _newton_polish(params, zz.ravel().copy(), pp.ravel().copy())

    failures = int(np.count_nonzero(~converged))
    if failures:
        logging.debug(f"不动点搜索: {failures}/{converged.size} 个种子 Newton 未收敛 (非致命)")

    for zc, pc in zip(z[converged], phi[converged]):
        result = _accept_candidate(params, float(zc), float(pc), known)
        if result.success:
            point = result.data
            known.append(point)
            label = "self-trapped" if point.z > 0 else "self-trapped-mirror"
            reports.append(_classify(params, point, label))

    logging.info(f"不动点搜索完成: Θ={params.theta:.4f}, 共 {len(reports)} 个 "
                 f"({', '.join(r.classification for r in reports)})")
    return reports


def _accept_candidate(params: DimerParams, z: float, phi: float,
                      known: list[PhasePoint]) -> ServiceResult[PhasePoint]:
    if abs(z) >= 1.0 - 1e-9:
        return ServiceResult.fail("靠近 |z| = 1 边界")
    phi = (phi + math.pi) % (2 * math.pi) - math.pi
    residual = np.hypot(*_flow(params, z, phi))
    if not residual < 1e-9:
        return ServiceResult.fail(f"残差过大: {residual:.2e}")
    for p in known:
        dphi = abs((phi - p.phi + math.pi) % (2 * math.pi) - math.pi)
        if math.hypot(z - p.z, dphi) < FIXED_POINT_MERGE_DISTANCE:
            return ServiceResult.fail("重复不动点")
    return ServiceResult.ok(PhasePoint(z, phi))


def orbit_period(params: DimerParams, p0: PhasePoint, t_max: float, tol: float = 1e-10) -> float:
    """闭合轨道周期：φ 以初始方向再次穿过 φ₀ 的时刻。"""
    _, dphi0 = eom(params, p0)
    if dphi0 == 0:
        raise ParameterError("初始点 dφ/dt = 0，无法用相位穿越定位周期", "PERIOD")

    def crossing(_t, y):
        return y[1] - p0.phi
    crossing.direction = math.copysign(1.0, dphi0)

    sol = solve_ivp(_plain_rhs(params, 1), (0.0, t_max), [p0.z, p0.phi], method="DOP853",
                    rtol=tol, atol=tol, events=crossing)
    events = [t for t in sol.t_events[0] if t > 1e-6 * t_max]
    if not events:
        raise IntegrationError(f"在 t ≤ {t_max} 内未找到闭合周期", "PERIOD")
    return float(events[0])


def phase_portrait_grid(params: DimerParams, nz: int = 201, nphi: int = 201):
    """返回 (z, φ, h) 网格，用于等能线相图。"""
    z = np.linspace(-1.0, 1.0, nz)
    phi = np.linspace(-math.pi, math.pi, nphi)
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    return z, phi, energy_array(params, zz, pp)
