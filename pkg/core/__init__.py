# 核心模块导出
from .exceptions import (
    OtocDimerError, ConfigurationError, ParameterError, PropagationError,
    IntegrationError, QuadratureError, FitError, ExportError, ServiceResult,
)
from .models import (
    DimerParams, StateVector, TridiagonalHamiltonian, OtocSeries,
    PhasePoint, TangentFrame, Trajectory, FixedPointKind, FixedPointReport,
    TimeScales, Regime, PhaseGrid, FitResult, KinkResult, ScanRow, RunContext,
)

__all__ = [
    'OtocDimerError',
    'ConfigurationError',
    'ParameterError',
    'PropagationError',
    'IntegrationError',
    'QuadratureError',
    'FitError',
    'ExportError',
    'ServiceResult',
    'DimerParams',
    'StateVector',
    'TridiagonalHamiltonian',
    'OtocSeries',
    'PhasePoint',
    'TangentFrame',
    'Trajectory',
    'FixedPointKind',
    'FixedPointReport',
    'TimeScales',
    'Regime',
    'PhaseGrid',
    'FitResult',
    'KinkResult',
    'ScanRow',
    'RunContext',
]
