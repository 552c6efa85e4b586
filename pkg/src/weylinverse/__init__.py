"""Direct and inverse Weyl problems for 2x2 systems with several real poles."""
from .core import (
    ConditioningError,
    ConvergenceError,
    DomainError,
    GridSpec,
    PoleSet,
    PotentialField,
    QualityError,
    SpectralPoint,
    TruncationWarning,
    ValidationError,
    WeylError,
    gauge_Q,
    map_lambda_to_mu,
    map_mu_to_lambda,
)

__version__ = "0.1.0"

from .direct import WeylData, bound_M, sample_weyl_function  # noqa: E402
from .estimator import WeylReconstructor  # noqa: E402
from .inverse import (  # noqa: E402
    ReconstructionReport,
    WeylSetData,
    recover_from_weyl_function,
    recover_from_weyl_set,
)

__all__ = [
    "ConditioningError", "ConvergenceError", "DomainError", "GridSpec", "PoleSet",
    "PotentialField", "QualityError", "SpectralPoint", "TruncationWarning", "ValidationError",
    "WeylError", "gauge_Q", "map_lambda_to_mu", "map_mu_to_lambda", "WeylData", "bound_M",
    "sample_weyl_function", "WeylReconstructor", "ReconstructionReport", "WeylSetData",
    "recover_from_weyl_function", "recover_from_weyl_set", "__version__",
]
