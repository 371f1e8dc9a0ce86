"""Exact transition kernels, samplers and total-variation checks for the
pairwise SMC and SMC' processes along a chromosome.

The state of both processes is the time to the most recent common
ancestor (TMRCA) of two sampled chromosomes; genetic distance plays the
role of time.
"""

__version__ = "0.1.0"

from .dists import Chain, Law  # noqa: E402
from .errors import (  # noqa: E402
    DomainError,
    GridMismatchError,
    GridResolutionError,
    SmcRatesError,
    ThresholdError,
    TruncationError,
    ValidityError,
)
from .kernels import GridDensity, GridSpec, MixedMeasure, kernel, smc_kernel, smc_prime_kernel  # noqa: E402
from .samplers import RngSeed  # noqa: E402

__all__ = [
    "Chain", "Law", "GridSpec", "GridDensity", "MixedMeasure", "RngSeed",
    "kernel", "smc_kernel", "smc_prime_kernel",
    "SmcRatesError", "DomainError", "ValidityError", "GridResolutionError",
    "GridMismatchError", "TruncationError", "ThresholdError",
]
