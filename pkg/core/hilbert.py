"""双位点 Bose-Hubbard 模型：固定 N 的 Fock 基、哈密顿量与初态制备。

基矢 |k, N−k⟩ 以位点 1 的占据数 k = 0..N 编号。
"""

from __future__ import annotations
import logging
import math

import numpy as np
from scipy.special import gammaln, xlogy

from .constants import NORM_TOLERANCE
from .exceptions import ParameterError
from .models import DimerParams, StateVector, TridiagonalHamiltonian


def build_hamiltonian(params: DimerParams) -> TridiagonalHamiltonian:
    """H = −2J(a₁†a₂ + a₂†a₁) + (g/2)Σ n̂ᵢ(n̂ᵢ−1)，写成三对角形式。"""
    n = params.n_particles
    k = np.arange(n + 1, dtype=np.float64)
    diag = 0.5 * params.g_int * (k * (k - 1) + (n - k) * (n - k - 1))
    kk = k[:-1]
    offdiag = -2.0 * params.j_hop * np.sqrt((kk + 1) * (n - kk))
    logging.debug(f"构建哈密顿量: N={n}, J={params.j_hop:.6g}, g={params.g_int:.6g}")
    return TridiagonalHamiltonian(diag, offdiag)


def dense_hamiltonian(hamiltonian: TridiagonalHamiltonian) -> np.ndarray:
    return (np.diag(hamiltonian.diag)
            + np.diag(hamiltonian.offdiag, 1)
            + np.diag(hamiltonian.offdiag, -1))


def _relative_phase(phi: float) -> float:
    # φ = φ₁ − φ₂ − π，ξ₁ 取实非负
    return -(phi + math.pi)


def coherent_amplitudes(n_particles: int, z: float, phi: float) -> np.ndarray:
    """数投影相干态振幅 c_k ∝ sqrt(C(N,k)) ξ₁^k ξ₂^{N−k}，在对数空间计算后归一化。"""
    if not abs(z) <= 1.0:
        raise ParameterError(f"布居差 z 必须满足 |z| ≤ 1: {z}", "STATE_Z")
    n = n_particles
    k = np.arange(n + 1, dtype=np.float64)
    xi1 = math.sqrt(max(0.5 * (1.0 + z), 0.0))
    xi2 = math.sqrt(max(0.5 * (1.0 - z), 0.0))
    log_binom = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    with np.errstate(divide="ignore"):
        log_mod = log_binom + xlogy(k, xi1) + xlogy(n - k, xi2)
    log_mod = np.where(np.isnan(log_mod), -np.inf, log_mod)
    log_mod -= np.max(log_mod)
    phase = (n - k) * _relative_phase(phi)
    amps = np.exp(log_mod) * np.exp(1j * phase)
    return amps / np.linalg.norm(amps)


def coherent_state(params: DimerParams, z: float, phi: float) -> StateVector:
    state = StateVector(coherent_amplitudes(params.n_particles, z, phi))
    if not state.is_normalized():
        raise ParameterError(f"相干态归一化失败: |ψ|={state.norm}", "STATE_NORM")
    return state


def number_operator_apply(state: StateVector) -> StateVector:
    """n̂₁|ψ⟩（不归一化）。"""
    k = np.arange(state.amplitudes.size, dtype=np.float64)
    return StateVector(k * state.amplitudes)


def half_difference_apply(state: StateVector) -> StateVector:
    """n̂ = (n̂₁ − n̂₂)/2 作用在 |ψ⟩ 上（不归一化）。"""
    n = state.n_particles
    k = np.arange(n + 1, dtype=np.float64)
    return StateVector((k - 0.5 * n) * state.amplitudes)


def expectation_n1(state: StateVector) -> float:
    k = np.arange(state.amplitudes.size, dtype=np.float64)
    return float(np.sum(k * np.abs(state.amplitudes) ** 2))


def variance_n1(state: StateVector) -> float:
    k = np.arange(state.amplitudes.size, dtype=np.float64)
    prob = np.abs(state.amplitudes) ** 2
    mean = float(np.sum(k * prob))
    return float(np.sum((k - mean) ** 2 * prob))


def squeeze_by_backward_evolution(params: DimerParams, state: StateVector, t0: float,
                                  propagator=None) -> StateVector:
    """返回 U(t₀)|ψ⟩；t₀ < 0 时沿不稳定方向压缩。"""
    from . import propagate

    if t0 == 0:
        return state
    if propagator is None:
        propagator = propagate.make_propagator(build_hamiltonian(params))
    logging.info(f"反向时间演化压缩: t₀={t0:.4f}, N={params.n_particles}")
    squeezed = propagate.evolve(propagator, state, t0)
    if not squeezed.is_normalized(NORM_TOLERANCE * 100):
        raise ParameterError(f"压缩后范数偏离 1: {squeezed.norm}", "STATE_NORM")
    return squeezed
