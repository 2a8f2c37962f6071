"""Long-range Ising sampling, scaling dimensions, RBM flows and block-spin RG."""

from .geometry import (CouplingKernel, LatticeGeometry, build_kernel, local_field,
                       total_energy)
from .mcmc import McmcConfig, SampleSet, exact_enumeration, run_chain
from .rbm import RbmParams, TrainConfig

__all__ = [
    "CouplingKernel", "LatticeGeometry", "build_kernel", "local_field", "total_energy",
    "McmcConfig", "SampleSet", "exact_enumeration", "run_chain", "RbmParams", "TrainConfig",
]
