"""Stommel 2-box ocean circulation model with ensemble data assimilation.

Subpackages and modules:

* ``core`` - dimensional box dynamics, RK4 integration, dimensionless scaling
* ``dynamics`` - equilibrium branches, stability, bifurcation structure
* ``etkf`` - augmented ensemble transform Kalman filter
* ``obs`` - ocean-profile pipeline: box assignment, averaging, seasonal fits
* ``calibrate`` - initial parameter estimation (Nelder-Mead on equilibria)
* ``experiments`` - twin experiments, real-data assimilation, tipping sweeps
* ``cli`` - command-line entry point
"""

__version__ = "0.1.0"

from . import _kernels
from .core import (
    BoxGeometry,
    ClimateScenario,
    DimensionlessState,
    Harmonic,
    ModelContext,
    ModelParams,
    OceanState,
    PhysicalConstants,
    SurfaceForcing,
    Trajectory,
)

kernel_backend = _kernels.backend
