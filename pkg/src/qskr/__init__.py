"""Secret key rates and power allocation for uplink NOMA continuous-variable QKD."""

from .baselines import BaselineKind, allocate_qoma, allocate_uqpa, evaluate_cih, evaluate_qoma, run_baseline
from .channel import (ChannelState, GeometryParams, TurbulenceParams, assemble_channel,
                      dbm_to_variance, variance_to_dbm)
from .config import parse_config, serialize_config
from .errors import (ConfigError, DegenerateChannelError, DomainError, InfeasibleError,
                     NonPhysicalStateError, NumericalDomainError, QskrError)
from .experiments import ExperimentSpec, run_experiment
from .quantum_core import entropy_h, holevo_asym, holevo_explicit, symplectic_spectrum
from .rates import PowerAllocation, SkrReport, SystemConfig, lower_bound, sum_rate_integral, sum_skr
from .sca import FeasibleSet, ScaTrace, kkt_check, run_sca, run_sca_multistart

__all__ = [
    "BaselineKind", "ChannelState", "ConfigError", "DegenerateChannelError", "DomainError",
    "ExperimentSpec", "FeasibleSet", "GeometryParams", "InfeasibleError", "NonPhysicalStateError",
    "NumericalDomainError", "PowerAllocation", "QskrError", "ScaTrace", "SkrReport",
    "SystemConfig", "TurbulenceParams", "allocate_qoma", "allocate_uqpa", "assemble_channel",
    "dbm_to_variance", "entropy_h", "evaluate_cih", "evaluate_qoma", "holevo_asym",
    "holevo_explicit", "kkt_check", "lower_bound", "parse_config", "run_baseline",
    "run_experiment", "run_sca", "run_sca_multistart", "serialize_config", "sum_rate_integral", "sum_skr",
    "symplectic_spectrum", "variance_to_dbm",
]
