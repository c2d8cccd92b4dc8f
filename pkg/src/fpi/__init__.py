"""Linearized Stokes flow in a box coupled to an in-plane elastic plate on its top face.

Submodules
----------
grid        MAC grid, boundary classification, discrete forms
stokes      Leray projection, stationary Stokes, extension and shear trace
plate       plate operator, feedback potentials, energies
stepper     monolithic theta-scheme, energy ledger, decay fits
spectral    dense generator, accretivity, spectrum, semigroup norm
attractor   absorbing set, stabilizability, dimension and regularity probes
io          configuration files, manifests, CSV series, snapshots
acceptance  the numerical certificates run by ``fpi certify``
"""
__version__ = "0.1.0"

from .grid import Grid, GridError, GridSpec, build_grid
from .plate import PotentialSpec
from .state import SystemState
from .stepper import ForcingSpec, InitialSpec, RunConfig, run

__all__ = ["Grid", "GridError", "GridSpec", "build_grid", "PotentialSpec", "SystemState",
           "ForcingSpec", "InitialSpec", "RunConfig", "run", "__version__"]
