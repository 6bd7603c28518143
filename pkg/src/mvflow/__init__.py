"""Measure-valued flows for multi-target filtering and their particle approximations."""

__version__ = "0.1.0"

from .exceptions import (AdmissibilityError, ConfigError, DegeneratePotentialError, DomainError,  # noqa: E402
                         ExtinctionError, MeasureError, MvflowError, ParameterError)
from .flow import FlowModel, MassMeasurePair, exact_reference_flow, flow_step  # noqa: E402
from .bernoulli import BernoulliModel, BernoulliModelSpec, BernoulliStep  # noqa: E402
from .phd import PhdModel, PhdModelSpec  # noqa: E402

__all__ = [
    "__version__", "AdmissibilityError", "ConfigError", "DegeneratePotentialError", "DomainError",
    "ExtinctionError", "MeasureError", "MvflowError", "ParameterError", "FlowModel", "MassMeasurePair",
    "exact_reference_flow", "flow_step", "BernoulliModel", "BernoulliModelSpec", "BernoulliStep",
    "PhdModel", "PhdModelSpec",
]
