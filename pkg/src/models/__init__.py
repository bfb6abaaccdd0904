"""
データモデルモジュール

アプリケーションで使用するデータモデルと例外を定義します。
"""

from .errors import (
    ModelError,
    NoRootInBracket,
    NoStableEquilibrium,
    InvalidConfig,
    ConfigError,
    RealEigenvalues,
    JacobianMismatch,
    DegenerateTransform,
    HardThresholdHasNoRate,
    ThinningBoundExceeded,
    InsufficientSegments,
    DegenerateData,
    LimitCycleNotFound,
)
from .parameters import MLParameters, State2, load_parameters, dump_parameters
from .simulation import BoundaryPolicy, SimConfig, Path, ISISample
from .hazard import HazardKind, HazardModel
from .results import (
    SpectrumKind,
    SpectralDensity,
    FiringProbabilityFit,
    CumulativeHazardCurve,
    HazardFit,
    RunManifest,
)

__all__ = [
    "ModelError",
    "NoRootInBracket",
    "NoStableEquilibrium",
    "InvalidConfig",
    "ConfigError",
    "RealEigenvalues",
    "JacobianMismatch",
    "DegenerateTransform",
    "HardThresholdHasNoRate",
    "ThinningBoundExceeded",
    "InsufficientSegments",
    "DegenerateData",
    "LimitCycleNotFound",
    "MLParameters",
    "State2",
    "load_parameters",
    "dump_parameters",
    "BoundaryPolicy",
    "SimConfig",
    "Path",
    "ISISample",
    "HazardKind",
    "HazardModel",
    "SpectrumKind",
    "SpectralDensity",
    "FiringProbabilityFit",
    "CumulativeHazardCurve",
    "HazardFit",
    "RunManifest",
]
