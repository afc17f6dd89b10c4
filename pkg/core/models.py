from __future__ import annotations
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import NORM_TOLERANCE
from .exceptions import ParameterError


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DimerParams:
    theta: float
    n_particles: int
    epsilon0: float = 1.0

    def __post_init__(self):
        if not -math.pi / 2 <= self.theta <= math.pi / 2:
            raise ParameterError(f"Θ 超出 [−π/2, π/2]: {self.theta}", "PARAM_THETA")
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ParameterError(f"粒子数 N 必须为正整数: {self.n_particles}", "PARAM_N")
        if not self.epsilon0 > 0:
            raise ParameterError(f"能量标度 ε₀ 必须为正: {self.epsilon0}", "PARAM_EPS")
        object.__setattr__(self, "n_particles", int(self.n_particles))

    @property
    def j_hop(self) -> float:
        return self.epsilon0 * math.cos(self.theta)

    @property
    def g_int(self) -> float:
        return self.epsilon0 * (2.0 / self.n_particles) * math.sin(self.theta)

    @property
    def gamma(self) -> float:
        return math.tan(self.theta)

    @property
    def is_unstable(self) -> bool:
        """反均匀不动点是否为双曲型 (γ > 2)。"""
        return math.cos(self.theta) > 0 and self.gamma > 2.0

    def with_n(self, n_particles: int) -> DimerParams:
        return DimerParams(self.theta, n_particles, self.epsilon0)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "n_particles": self.n_particles, "epsilon0": self.epsilon0}


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _frozen_array(self.amplitudes, np.complex128))
        if self.amplitudes.ndim != 1 or self.amplitudes.size < 2:
            raise ParameterError("态矢量必须是长度 N+1 ≥ 2 的一维数组", "STATE_SHAPE")

    @property
    def n_particles(self) -> int:
        return self.amplitudes.size - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORM_TOLERANCE) -> bool:
        return abs(self.norm - 1.0) <= tol

    def overlap(self, other: StateVector) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: StateVector) -> float:
        return abs(self.overlap(other))


@dataclass(frozen=True)
class TridiagonalHamiltonian:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "diag", _frozen_array(self.diag, np.float64))
        object.__setattr__(self, "offdiag", _frozen_array(self.offdiag, np.float64))
        if self.offdiag.size != self.diag.size - 1:
            raise ParameterError("非对角元长度必须为 N", "HAM_SHAPE")
        if not (np.all(np.isfinite(self.diag)) and np.all(np.isfinite(self.offdiag))):
            raise ParameterError("哈密顿量矩阵元含非有限值", "HAM_FINITE")

    @property
    def dimension(self) -> int:
        return self.diag.size

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        out = self.diag * vec
        out[:-1] += self.offdiag * vec[1:]
        out[1:] += self.offdiag * vec[:-1]
        return out


@dataclass(frozen=True)
class OtocSeries:
    times: np.ndarray
    values: np.ndarray
    params_snapshot: DimerParams
    state_label: str = ""
    stderr: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen_array(self.times, np.float64))
        object.__setattr__(self, "values", _frozen_array(self.values, np.float64))
        if self.stderr is not None:
            object.__setattr__(self, "stderr", _frozen_array(self.stderr, np.float64))
        if self.times.shape != self.values.shape:
            raise ParameterError("时间与数值序列长度不一致", "SERIES_SHAPE")

    def __len__(self) -> int:
        return self.times.size

    def restricted(self, t_lo: float, t_hi: float) -> OtocSeries:
        mask = (self.times >= t_lo) & (self.times <= t_hi)
        stderr = self.stderr[mask] if self.stderr is not None else None
        return OtocSeries(self.times[mask], self.values[mask], self.params_snapshot, self.state_label, stderr)

    def scaled(self, factor: float) -> OtocSeries:
        return OtocSeries(self.times, self.values * factor, self.params_snapshot, self.state_label, self.stderr)


@dataclass(frozen=True)
class PhasePoint:
    z: float
    phi: float


@dataclass(frozen=True)
class TangentFrame:
    time: float
    m: np.ndarray
    base: PhasePoint

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen_array(self.m, np.float64))

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.m))

    def dn_dphi0(self, n_particles: int) -> float:
        return 0.5 * n_particles * float(self.m[0, 1])


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    z: np.ndarray
    phi: np.ndarray
    energy: np.ndarray
    frames: np.ndarray | None = None  # 形状 (T, 2, 2)

    def point(self, index: int) -> PhasePoint:
        return PhasePoint(float(self.z[index]), float(self.phi[index]))

    def tangent_frames(self) -> list[TangentFrame]:
        if self.frames is None:
            return []
        return [TangentFrame(float(t), m, self.point(i)) for i, (t, m) in enumerate(zip(self.times, self.frames))]

    @property
    def max_relative_energy_drift(self) -> float:
        ref = self.energy[0]
        scale = abs(ref) if ref != 0 else 1.0
        return float(np.max(np.abs(self.energy - ref)) / scale)


class FixedPointKind:
    STABLE_CENTER = "stable-center"
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class FixedPointReport:
    location: PhasePoint
    classification: str
    exponent: float
    jacobian: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "jacobian", _frozen_array(self.jacobian, np.float64))


@dataclass(frozen=True)
class TimeScales:
    lambda_s: float
    omega: float
    a: float
    tau_s: float
    tau_L: float
    tau_E: float
    alpha: float
    n_particles: int
    theta: float
    tau_cross: float | None = None

    def to_dict(self) -> dict:
        return {
            "theta": self.theta, "n_particles": self.n_particles, "omega": self.omega,
            "lambda_s": self.lambda_s, "a": self.a, "tau_s": self.tau_s,
            "tau_L": self.tau_L, "tau_E": self.tau_E, "alpha": self.alpha,
            "tau_cross": self.tau_cross,
        }


class Regime:
    POLYNOMIAL = "polynomial"
    DOUBLE_RATE = "double-rate"
    SINGLE_RATE = "single-rate"
    POST_EHRENFEST = "post-Ehrenfest"


@dataclass(frozen=True)
class PhaseGrid:
    z_values: np.ndarray
    phi_values: np.ndarray
    density: np.ndarray  # 形状 (len(z), len(phi))
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "z_values", _frozen_array(self.z_values, np.float64))
        object.__setattr__(self, "phi_values", _frozen_array(self.phi_values, np.float64))
        object.__setattr__(self, "density", _frozen_array(self.density, np.float64))

    @property
    def cell_area(self) -> float:
        dz = float(self.z_values[1] - self.z_values[0]) if self.z_values.size > 1 else 1.0
        dphi = float(self.phi_values[1] - self.phi_values[0]) if self.phi_values.size > 1 else 1.0
        return dz * dphi

    @property
    def total_weight(self) -> float:
        return float(self.density.sum() * self.cell_area)

    def argmax(self) -> PhasePoint:
        iz, iphi = np.unravel_index(int(np.argmax(self.density)), self.density.shape)
        return PhasePoint(float(self.z_values[iz]), float(self.phi_values[iphi]))


@dataclass(frozen=True)
class FitResult:
    window: tuple[float, float]
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    n_points: int
    convention: str = "log-slope"  # C(t) ~ exp(slope·t)

    def ratio_to(self, target_rate: float) -> float:
        return self.slope / target_rate if target_rate else float("nan")


@dataclass(frozen=True)
class KinkResult:
    found: bool
    time: float | None = None
    error: float | None = None
    slope_before: float | None = None
    slope_after: float | None = None
    message: str = ""


@dataclass
class ScanRow:
    theta: float
    n_particles: int
    lambda_s_classical: float
    fit_2ls_window: FitResult | None = None
    fit_1ls_window: FitResult | None = None
    kink: KinkResult | None = None
    slow_rate: bool = False
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.fit_2ls_window is not None and self.fit_1ls_window is not None


@dataclass
class RunContext:
    """一次命令运行的上下文：已解析配置与输出目录。"""
    config: dict
    output_dir: Path
    outputs: list = field(default_factory=list)
