"""Ensemble propagation kernels.

The hot loop of every experiment is the month-by-month RK4 propagation of an
ensemble of box states, each member with its own diffusion/advection
parameters. Two interchangeable implementations exist:

* ``_fast`` - a Cython extension compiled at install time;
* ``reference`` - a vectorized NumPy fallback.

Both evaluate the identical floating-point expressions (the extension is
compiled with FP contraction off), so results are bit-for-bit equal. The
backend is selected once at import: the compiled kernel when present, unless
the environment variable ``STOMMEL_KERNEL`` is set to ``reference`` (or
``compiled`` to insist on the extension).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import reference


@dataclass(frozen=True)
class ScenarioArgs:
    """Climate forcing in kernel units: onset in model seconds, melt in m^3 s^-1."""

    active: int
    onset_t: float
    warm_e_per_yr: float
    warm_p_per_yr: float
    year_seconds: float
    melt: float


@dataclass(frozen=True)
class KernelArgs:
    """Geometry, equation-of-state constants and forcing shared by all members."""

    dx: float
    dy_p: float
    dy_e: float
    dz: float
    rho0: float
    T0: float
    S0: float
    alphaT: float
    alphaS: float
    forcing: np.ndarray  # (4, 3) rows Te_a, Tp_a, Se_a, Sp_a; cols c0, c_cos, c_sin
    tau: float
    scenario: ScenarioArgs


def _select():
    choice = os.environ.get("STOMMEL_KERNEL", "auto").strip().lower() or "auto"
    if choice in ("reference", "python", "pure"):
        return reference, "reference"
    try:
        from . import _fast
    except ImportError:
        if choice == "compiled":
            raise
        return reference, "reference"
    return _fast, "compiled"


_impl, _backend = _select()


def backend():
    """Name of the active kernel backend ('compiled' or 'reference')."""
    return _backend


def get_impl(name):
    """Fetch a specific backend module by name (for tests and benchmarks)."""
    if name == "reference":
        return reference
    if name == "compiled":
        from . import _fast

        return _fast
    raise ValueError(f"unknown kernel backend {name!r}")


def propagate_ensemble(states, kT, kS, gamma, t0, dt, n_steps, args, impl=None):
    """Record ``n_steps`` RK4 steps of the whole ensemble.

    Returns an array of shape (n_steps + 1, M, 4) whose first slice is a copy
    of ``states``.
    """
    states = np.ascontiguousarray(states, dtype=np.float64)
    kT = np.ascontiguousarray(kT, dtype=np.float64)
    kS = np.ascontiguousarray(kS, dtype=np.float64)
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != 4:
        raise ValueError("states must have shape (M, 4)")
    M = states.shape[0]
    if not (kT.shape == kS.shape == gamma.shape == (M,)):
        raise ValueError("parameter arrays must have shape (M,)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if n_steps == 0:
        return states[None, :, :].copy()
    forcing = np.ascontiguousarray(args.forcing, dtype=np.float64)
    if forcing.shape != (4, 3):
        raise ValueError("forcing coefficients must have shape (4, 3)")
    if forcing is not args.forcing:
        from dataclasses import replace

        args = replace(args, forcing=forcing)
    mod = _impl if impl is None else impl
    return mod.propagate_ensemble(states, kT, kS, gamma, float(t0), float(dt), int(n_steps), args)
