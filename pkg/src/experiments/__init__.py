"""
実験モジュール

CLIのサブコマンドに対応する実験クラスを提供します。
"""

from .base_experiment import BaseExperiment, ExperimentResult, csv_table
from .analytic_experiments import EquilibriumExperiment, LinearizeExperiment, MeanPassageExperiment
from .simulation_experiments import SimulateExperiment, SpectrumExperiment
from .firing_experiments import FiringProbExperiment
from .isi_experiments import FitHazardExperiment, IsiExperiment

# サブコマンド名 → 実験クラス
EXPERIMENTS = {
    cls.name: cls
    for cls in (
        EquilibriumExperiment,
        LinearizeExperiment,
        SimulateExperiment,
        SpectrumExperiment,
        FiringProbExperiment,
        FitHazardExperiment,
        IsiExperiment,
        MeanPassageExperiment,
    )
}

__all__ = [
    "BaseExperiment",
    "ExperimentResult",
    "csv_table",
    "EquilibriumExperiment",
    "LinearizeExperiment",
    "MeanPassageExperiment",
    "SimulateExperiment",
    "SpectrumExperiment",
    "FiringProbExperiment",
    "FitHazardExperiment",
    "IsiExperiment",
    "EXPERIMENTS",
]
