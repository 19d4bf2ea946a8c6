"""Two-frequency linearized inverse scattering: exact operators and trainable networks."""

import os

# HSB_THREADS caps BLAS/OpenMP workers; effective when hsbnet is imported before numpy
if os.environ.get("HSB_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["HSB_THREADS"])

from ._kernels import BACKEND
from .core import (ConfigError, NumericalError, ProblemConfig, ShapeError,
                   StateError)

__all__ = ["BACKEND", "ProblemConfig", "ConfigError", "ShapeError",
           "NumericalError", "StateError"]
__version__ = "0.1.0"
