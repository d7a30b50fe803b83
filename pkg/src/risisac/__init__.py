"""Joint transmit and RIS beamforming for integrated sensing and communication."""

from .channels import ChannelSet, PhaseAlphabet, perturb_csi, synthesize_channels
from .config import ScenarioConfig, config_from_mapping, load_profile
from .errors import (
    ConfigError,
    DomainError,
    FeasibilityViolation,
    InfeasibleRate,
    ManifoldContractError,
    NoFeasibleDraw,
    NoFeasibleStart,
    OracleInfeasible,
    OracleTooLarge,
    RisIsacError,
    StepTooLarge,
    StructuralError,
)
from .harness import SweepSpec, run_sweep
from .manifold import ComplexCircle, Hypersphere, ao_rg, egrad_ris, egrad_tx, rsa_ris, rsa_tx
from .metrics import BeamformingState, MetricReport, evaluate, path_decomposition
from .oracles import exhaustive_phase_oracle, finite_difference_oracle
from .sdp import SdpSubproblem, solve_sdp
from .sdr_odi import ao_sdr_odi, gaussian_randomize, odi_phase_sweep

__version__ = "0.1.0"

__all__ = [
    "BeamformingState", "ChannelSet", "ComplexCircle", "ConfigError", "DomainError",
    "FeasibilityViolation", "Hypersphere", "InfeasibleRate", "ManifoldContractError",
    "MetricReport", "NoFeasibleDraw", "NoFeasibleStart", "OracleInfeasible", "OracleTooLarge",
    "PhaseAlphabet", "RisIsacError", "ScenarioConfig", "SdpSubproblem", "StepTooLarge",
    "StructuralError", "SweepSpec", "ao_rg", "ao_sdr_odi", "config_from_mapping", "egrad_ris",
    "egrad_tx", "evaluate", "exhaustive_phase_oracle", "finite_difference_oracle",
    "gaussian_randomize", "load_profile", "odi_phase_sweep", "path_decomposition", "perturb_csi",
    "rsa_ris", "rsa_tx", "run_sweep", "solve_sdp", "synthesize_channels",
]
