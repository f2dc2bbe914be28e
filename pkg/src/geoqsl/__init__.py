"""Geometric quantum speed limit bounds for finite-dimensional open and closed systems."""

from .bounds import (
    BoundReport,
    QuadratureConfig,
    evaluate_bounds,
    tau_combined,
    tau_const_alpha,
    tau_f1,
    tau_f2,
    tau_f3,
    tau_general,
    tau_uni_p0,
)
from .dynamics import Schedule, Trajectory
from .errors import (
    ConstraintViolated,
    DegenerateGeometry,
    DimensionMismatch,
    InvalidState,
    NonConvergence,
    NumericalError,
    ParseError,
    QSLError,
)
from .linalg import RngStream
from .metric import AlternativeFunction, distance, embed, speed

__version__ = "0.1.0"
