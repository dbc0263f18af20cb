"""Quenched random walk on a boundary-case branching potential: simulation lab."""

__version__ = "0.1.0"

from .env_model import OffspringLaw, calibrate_boundary, psi, psi_prime, reference_law  # noqa: E402
from .env_tree import EnvTree, RestrictionParams, in_set  # noqa: E402
from .errors import (  # noqa: E402
    CalibrationError,
    ConfigError,
    DomainError,
    EfficiencyError,
    ResourceError,
    RwtreeError,
)
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "BACKEND", "CalibrationError", "ConfigError", "DomainError", "EfficiencyError", "EnvTree",
    "OffspringLaw", "RestrictionParams", "ResourceError", "RwtreeError", "calibrate_boundary",
    "in_set", "psi", "psi_prime", "reference_law",
]
