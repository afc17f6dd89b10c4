"""精确量子时间演化与量子 OTOC C(t)。"""

from __future__ import annotations
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.special import jv

from utils.multithreading_utils import process_items_with_threads, resolve_max_workers
from .constants import (
    CHEBYSHEV_DEFAULT_TOLERANCE, CHEBYSHEV_MAX_TERMS, CHEBYSHEV_SLICE_PHASE,
    DEFAULT_TIME_POINTS, DEFAULT_TIME_SPAN_FACTOR, EIGEN_BACKEND_MAX_N, GERSHGORIN_PADDING,
)
from .exceptions import ParameterError, PropagationError
from .hilbert import number_operator_apply
from .models import DimerParams, OtocSeries, StateVector, TridiagonalHamiltonian


class Backend:
    EIGEN = "eigendecomposition"
    CHEBYSHEV = "chebyshev"

    ALL = (EIGEN, CHEBYSHEV)


_OTOC_TIME_CHUNK = 64
_ORTHOGONALITY_TOLERANCE = 1e-9
_FULL_GRAM_MAX_DIM = 2048
_ORTHOGONALITY_SKETCH_COLUMNS = 8


@dataclass(frozen=True)
class Propagator:
    backend: str
    hamiltonian: TridiagonalHamiltonian
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    e_min: float = 0.0
    e_max: float = 0.0
    tolerance: float = CHEBYSHEV_DEFAULT_TOLERANCE
    max_terms: int = CHEBYSHEV_MAX_TERMS
    slice_time: float | None = None

    @property
    def dimension(self) -> int:
        return self.hamiltonian.dimension

    @property
    def spectral_center(self) -> float:
        return 0.5 * (self.e_max + self.e_min)

    @property
    def spectral_radius(self) -> float:
        return 0.5 * (self.e_max - self.e_min)


def default_backend(n_particles: int) -> str:
    return Backend.EIGEN if n_particles <= EIGEN_BACKEND_MAX_N else Backend.CHEBYSHEV


def default_time_grid(tau_e: float, points: int = DEFAULT_TIME_POINTS,
                      span_factor: float = DEFAULT_TIME_SPAN_FACTOR) -> np.ndarray:
    return np.linspace(0.0, span_factor * tau_e, points)


def gershgorin_bounds(hamiltonian: TridiagonalHamiltonian, padding: float = GERSHGORIN_PADDING) -> tuple[float, float]:
    radius = np.zeros_like(hamiltonian.diag)
    radius[:-1] += np.abs(hamiltonian.offdiag)
    radius[1:] += np.abs(hamiltonian.offdiag)
    lo = float(np.min(hamiltonian.diag - radius))
    hi = float(np.max(hamiltonian.diag + radius))
    pad = padding * max(hi - lo, 1e-12)
    return lo - pad, hi + pad


def _check_orthogonality(vectors: np.ndarray, full_gram_max_dim: int = _FULL_GRAM_MAX_DIM):
    dim = vectors.shape[0]
    if dim <= full_gram_max_dim:
        gram = vectors.T @ vectors
        residual = np.abs(gram - np.eye(dim)).max(axis=0)
        where = "列"
    else:
        # 大维度用随机检验矩阵估计 ‖VᵀVX − X‖，种子固定
        sketch = np.random.default_rng(0).standard_normal((dim, _ORTHOGONALITY_SKETCH_COLUMNS))
        back = vectors.T @ (vectors @ sketch)
        residual = np.linalg.norm(back - sketch, axis=0) / np.linalg.norm(sketch, axis=0)
        where = "随机向量"
    worst = int(np.argmax(residual))
    if residual[worst] > _ORTHOGONALITY_TOLERANCE:
        raise PropagationError(
            f"本征矢量正交性残差过大: {where} {worst}, 残差 {residual[worst]:.3e}", "EIG_ORTHO")


def make_propagator(hamiltonian: TridiagonalHamiltonian, backend: str | None = None,
                    tolerance: float = CHEBYSHEV_DEFAULT_TOLERANCE,
                    max_terms: int = CHEBYSHEV_MAX_TERMS,
                    auto_slice: bool = True) -> Propagator:
    n_particles = hamiltonian.dimension - 1
    backend = backend or default_backend(n_particles)
    if backend not in Backend.ALL:
        raise ParameterError(f"未知的传播后端: {backend}", "BACKEND")

    if backend == Backend.EIGEN:
        logging.debug(f"三对角本征分解: 维度 {hamiltonian.dimension}")
        try:
            values, vectors = eigh_tridiagonal(hamiltonian.diag, hamiltonian.offdiag)
        except LinAlgError as e:
            raise PropagationError(f"三对角本征求解不收敛: {e}", "EIG_CONVERGE") from e
        _check_orthogonality(vectors)
        return Propagator(
            backend=backend, hamiltonian=hamiltonian,
            eigenvalues=values, eigenvectors=vectors,
            e_min=float(values[0]), e_max=float(values[-1]),
        )

    e_min, e_max = gershgorin_bounds(hamiltonian)
    radius = 0.5 * (e_max - e_min)
    slice_time = CHEBYSHEV_SLICE_PHASE / radius if (auto_slice and radius > 0) else None
    logging.debug(f"Chebyshev 传播器: 谱界 [{e_min:.4g}, {e_max:.4g}], 切片时长 {slice_time}")
    return Propagator(
        backend=backend, hamiltonian=hamiltonian, e_min=e_min, e_max=e_max,
        tolerance=tolerance, max_terms=max_terms, slice_time=slice_time,
    )


def _chebyshev_coefficients(prop: Propagator, t: float) -> np.ndarray:
    x = prop.spectral_radius * abs(t)
    orders = np.arange(prop.max_terms + 1)
    bessel = jv(orders, x)
    above = np.nonzero(np.abs(bessel) >= prop.tolerance)[0]
    last = int(above[-1]) if above.size else 0
    if last >= prop.max_terms:
        raise PropagationError(
            f"Chebyshev 级数长度溢出: Δ·|t| = {x:.1f} 需要超过 {prop.max_terms} 项，"
            f"请将时间切片 (减小单步 t) 或增大 max_terms", "CHEB_OVERFLOW")
    order = last + 2
    sign = math.copysign(1.0, t) if t != 0 else 1.0
    coeffs = 2.0 * bessel[:order] * (-1j * sign) ** orders[:order]
    coeffs[0] = bessel[0]
    return coeffs


def _chebyshev_step(prop: Propagator, vec: np.ndarray, t: float) -> np.ndarray:
    ham = prop.hamiltonian
    center, radius = prop.spectral_center, prop.spectral_radius
    if radius == 0:
        return np.exp(-1j * center * t) * vec
    coeffs = _chebyshev_coefficients(prop, t)

    def scaled(v):
        return (ham.matvec(v) - center * v) / radius

    phi_prev = vec
    result = coeffs[0] * phi_prev
    if coeffs.size > 1:
        phi_cur = scaled(vec)
        result = result + coeffs[1] * phi_cur
        for c in coeffs[2:]:
            phi_next = 2.0 * scaled(phi_cur) - phi_prev
            result = result + c * phi_next
            phi_prev, phi_cur = phi_cur, phi_next
    return np.exp(-1j * center * t) * result


def _apply_evolution(prop: Propagator, vec: np.ndarray, t: float) -> np.ndarray:
    if not math.isfinite(t):
        raise ParameterError(f"演化时间必须有限: {t}", "TIME")
    if t == 0:
        return vec.copy()
    if prop.backend == Backend.EIGEN:
        coeffs = prop.eigenvectors.T @ vec
        return prop.eigenvectors @ (np.exp(-1j * prop.eigenvalues * t) * coeffs)

    if prop.slice_time is None:
        return _chebyshev_step(prop, vec, t)
    n_slices = max(1, math.ceil(abs(t) / prop.slice_time))
    dt = t / n_slices
    out = vec
    for _ in range(n_slices):
        out = _chebyshev_step(prop, out, dt)
    return out


def evolve(prop: Propagator, state: StateVector, t: float) -> StateVector:
    """e^{−iHt}|ψ⟩，t 可为负。"""
    return StateVector(_apply_evolution(prop, state.amplitudes, t))


def _operator_weights(name: str, dim: int) -> np.ndarray:
    k = np.arange(dim, dtype=np.float64)
    if name == "n1":
        return k
    if name == "n_half":
        return k - 0.5 * (dim - 1)
    raise ParameterError(f"不支持的算符: {name}", "OPERATOR")


def _check_times(times: np.ndarray):
    if times.ndim != 1 or times.size == 0:
        raise ParameterError("时间网格必须为非空一维数组", "TIME_GRID")
    if np.any(np.diff(times) < 0):
        raise ParameterError("时间网格必须升序排列", "TIME_GRID")


def _otoc_eigen(prop: Propagator, psi: np.ndarray, weights: np.ndarray, times: np.ndarray) -> np.ndarray:
    vecs, energies = prop.eigenvectors, prop.eigenvalues
    psi_e = vecs.T @ psi
    npsi_e = vecs.T @ (weights * psi)
    values = np.empty(times.size)
    for start in range(0, times.size, _OTOC_TIME_CHUNK):
        chunk = times[start:start + _OTOC_TIME_CHUNK]
        phases = np.exp(-1j * np.outer(energies, chunk))
        # |b⟩ = U n|ψ⟩, |c⟩ = U† n |b⟩
        b = vecs @ (phases * npsi_e[:, None])
        c = vecs @ (phases.conj() * (vecs.T @ (weights[:, None] * b)))
        # |a⟩ = U|ψ⟩, |d⟩ = n U† n |a⟩
        a = vecs @ (phases * psi_e[:, None])
        d = weights[:, None] * (vecs @ (phases.conj() * (vecs.T @ (weights[:, None] * a))))
        diff = c - d
        values[start:start + chunk.size] = np.einsum("ij,ij->j", diff.conj(), diff).real
    return values


def _otoc_chebyshev(prop: Propagator, psi: np.ndarray, weights: np.ndarray, times: np.ndarray) -> np.ndarray:
    def one_time(t: float) -> float:
        a = _apply_evolution(prop, psi, t)
        b = _apply_evolution(prop, weights * psi, t)
        c = _apply_evolution(prop, weights * b, -t)
        d = weights * _apply_evolution(prop, weights * a, -t)
        inner = np.vdot(c - d, c - d)
        if abs(inner.imag) > 1e-10 * max(abs(inner.real), 1.0):
            raise PropagationError(f"OTOC 内积虚部残差过大: t={t}, {inner.imag:.3e}", "OTOC_IMAG")
        return float(inner.real)

    values = process_items_with_threads(
        list(times), one_time, max_workers=resolve_max_workers(), description="Chebyshev OTOC 时间点")
    if any(v is None for v in values):
        raise PropagationError("部分时间点的 OTOC 计算失败，详见日志", "OTOC_FAILED")
    return np.asarray(values, dtype=np.float64)


def otoc(prop: Propagator, state: StateVector, times, params: DimerParams,
         state_label: str = "", operator: str = "n1") -> OtocSeries:
    """C(t) = ‖[n̂(t), n̂]|ψ⟩‖²，n̂ 为 n̂₁ 或 (n̂₁−n̂₂)/2。params 记入结果快照，N 必须与传播器维度一致。"""
    times = np.asarray(times, dtype=np.float64)
    _check_times(times)
    if params.n_particles != prop.dimension - 1:
        raise ParameterError(
            f"参数 N={params.n_particles} 与传播器维度 {prop.dimension} 不符", "STATE_DIM")
    weights = _operator_weights(operator, prop.dimension)
    psi = state.amplitudes
    logging.info(f"量子 OTOC: 后端={prop.backend}, 维度={prop.dimension}, 时间点={times.size}")

    if prop.backend == Backend.EIGEN:
        values = _otoc_eigen(prop, psi, weights, times)
    else:
        values = _otoc_chebyshev(prop, psi, weights, times)

    # [n̂(0), n̂] = 0，t = 0 处取精确零
    values[times == 0] = 0.0
    values = np.maximum(values, 0.0)
    logging.info(f"量子 OTOC 完成: max C = {values.max():.4e}")
    return OtocSeries(times, values, params, state_label or f"operator={operator}")


def otoc_at(prop: Propagator, state: StateVector, t: float) -> float:
    """单个时间点的 C(t)，直接使用 hilbert 中的算符作用函数，供交叉验证。"""
    a = evolve(prop, state, t)
    b = evolve(prop, number_operator_apply(state), t)
    c = evolve(prop, number_operator_apply(b), -t)
    d = number_operator_apply(evolve(prop, number_operator_apply(a), -t))
    diff = c.amplitudes - d.amplitudes
    return float(np.vdot(diff, diff).real)


__all__ = [
    "Backend", "Propagator", "default_backend", "default_time_grid", "gershgorin_bounds",
    "make_propagator", "evolve", "otoc", "otoc_at",
]
