"""Signed-particle Wigner Monte Carlo with an on-demand, closed-form kernel."""

__version__ = "0.1.0"

from .engine import SimConfig, run
from .errors import ConfigError, MemoryCapExceeded, SimulationAbort
from .kernel_net import KernelCache, kernel_value
from .kernel_oracle import kernel_bruteforce, precompute_dense
from .phase_space import GridSpec, PotentialField, build_grid

__all__ = [
    "ConfigError", "GridSpec", "KernelCache", "MemoryCapExceeded", "PotentialField", "SimConfig",
    "SimulationAbort", "build_grid", "kernel_bruteforce", "kernel_value", "precompute_dense", "run",
]
