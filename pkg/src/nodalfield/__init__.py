"""Sampling and nodal geometry of cut-off fractional Gaussian fields on the flat torus."""
from .errors import (
    CapacityError, NodalFieldError, ParameterError, PreconditionError, RegimeError, ResolutionError,
)
from .field_sampler import FieldSample, GridSpec, sample_field
from .nodal_topology import NodalReport, count_components_2d, count_components_nd
from .torus_spectrum import FieldParams, enumerate_modes

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "FieldParams", "FieldSample", "GridSpec", "NodalFieldError", "NodalReport",
    "ParameterError", "PreconditionError", "RegimeError", "ResolutionError", "count_components_2d",
    "count_components_nd", "enumerate_modes", "sample_field", "__version__",
]
