"""Initial parameter estimation.

Picks diffusion/advection parameters so that the observed initial
temperature difference, salinity difference and overturning transport sit
close to a thermally driven equilibrium of the model under annual-mean
forcing. The weighted squared mismatch is minimized with a Nelder-Mead
simplex over the logarithms of the three parameters, which keeps them
positive without constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core, dynamics
from .core import SV, ModelParams, OceanState
from .errors import EquilibriumNotFoundError


@dataclass(frozen=True)
class CalibrationTarget:
    """Observed initial differences, their uncertainties, and the transport."""

    dT_star: float  # Te - Tp (degC)
    dS_star: float  # Se - Sp (ppt)
    sigma_T_e: float
    sigma_T_p: float
    sigma_S_e: float
    sigma_S_p: float
    Q_target_sv: float = 18.0
    Q_sigma_sv: float = 2.5

    def __post_init__(self):
        sigmas = (self.sigma_T_e, self.sigma_T_p, self.sigma_S_e, self.sigma_S_p, self.Q_sigma_sv)
        if any(s <= 0 for s in sigmas):
            raise ValueError("all uncertainties must be positive")


@dataclass(frozen=True)
class SimplexOptions:
    initial_step: float = 0.1
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    tol: float = 1e-8  # convergence tolerance on the cost spread
    max_iter: int = 2000

    def __post_init__(self):
        ok = (
            self.reflection > 0
            and self.expansion > 1
            and 0 < self.contraction < 1
            and 0 < self.shrink < 1
        )
        if not ok:
            raise ValueError("simplex coefficients violate the standard constraints")


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fval: float
    converged: bool
    n_iter: int
    n_eval: int


def nelder_mead(cost, x0, opts=SimplexOptions()):
    """Minimize ``cost`` with the standard downhill-simplex moves.

    Returns the best vertex when the spread of vertex costs drops below the
    tolerance; hitting the iteration cap returns the best-so-far with
    ``converged=False``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        return float(cost(x))

    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += opts.initial_step
        simplex.append(v)
    values = [f(v) for v in simplex]
    if not all(np.isfinite(values)):
        raise ValueError("cost is not finite on the initial simplex")

    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        order = np.argsort(values)
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if values[-1] - values[0] < opts.tol:
            converged = True
            break

        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + opts.reflection * (centroid - simplex[-1])
        fr = f(xr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe = centroid + opts.expansion * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + opts.contraction * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + opts.contraction * (simplex[-1] - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        simplex = [best] + [best + opts.shrink * (v - best) for v in simplex[1:]]
        values = [values[0]] + [f(v) for v in simplex[1:]]

    order = np.argsort(values)
    return NelderMeadResult(
        x=simplex[order[0]].copy(),
        fval=values[order[0]],
        converged=converged,
        n_iter=it,
        n_eval=evals,
    )


def equilibrium_for_params(p, g, c, f_mean):
    """Thermally driven equilibrium differences and transport for given parameters.

    Solves the dimensionless equilibrium under the annual-mean forcing,
    keeps the stable TH solution with the largest transport, and maps it
    back to dimensional units. Returns (dT_eq, dS_eq, Q_eq_sv).
    """
    dT_a = f_mean.Te_a.c0 - f_mean.Tp_a.c0
    dS_a = f_mean.Se_a.c0 - f_mean.Sp_a.c0
    if dT_a <= 0:
        raise EquilibriumNotFoundError("annual-mean temperature forcing must favour the equator")
    ct = core._temp_scale(p, g, c)
    cs = core._salt_scale(p, g, c)
    eta1 = ct * dT_a
    eta3 = p.kS / p.kT
    eta2 = eta3 * cs * dS_a
    equilibria = dynamics.find_equilibria(eta1, eta2, eta3)
    candidates = [
        e
        for e in equilibria
        if e.Psi > 0 and e.stability in (dynamics.STABLE_NODE, dynamics.STABLE_FOCUS)
    ]
    if not candidates:
        raise EquilibriumNotFoundError(
            f"no stable TH equilibrium for eta=({eta1:.4g}, {eta2:.4g}, {eta3:.4g})"
        )
    eq = max(candidates, key=lambda e: e.Psi)
    dT_eq = eq.T / ct
    dS_eq = eq.S / cs
    state = OceanState(Te=dT_eq, Tp=0.0, Se=dS_eq, Sp=0.0)
    q_eq = core.transport(state, p, g, c) / SV
    return dT_eq, dS_eq, q_eq


def _balance_guess(target, g, c, f_mean):
    """Closed-form equilibrium balance as the simplex starting point.

    At equilibrium the surface relaxation of each difference balances the
    advective mixing, and the transport equation ties gamma to the density
    contrast; inverting those three relations at the target values gives a
    parameter set that is already close to the minimum when one exists.
    """
    q = target.Q_target_sv * SV
    dT_a = f_mean.Te_a.c0 - f_mean.Tp_a.c0
    dS_a = f_mean.Se_a.c0 - f_mean.Sp_a.c0
    kT = 1.0e-6
    kS = 1.0e-6
    gamma = 1.0
    if target.dT_star > 0 and dT_a > target.dT_star:
        kT = q * target.dT_star / (g.dx * g.dy_bar * (dT_a - target.dT_star))
    if target.dS_star > 0 and dS_a > target.dS_star:
        kS = q * target.dS_star / (g.dx * g.dy_bar * (dS_a - target.dS_star))
    contrast = c.alphaT * target.dT_star - c.alphaS * target.dS_star
    if contrast > 0:
        gamma = q / (g.dx * g.dz * contrast)
    return np.log([kT, kS, gamma])


def initial_param_fit(target, g, c, f, opts=SimplexOptions(), x0=None):
    """Fit (kT, kS, gamma) so the target sits near a TH equilibrium.

    The cost is the weighted squared mismatch of the equilibrium temperature
    difference, salinity difference and transport; parameter sets without a
    stable TH equilibrium get a large penalty so the simplex retreats.
    """
    f_mean = f.annual_mean()
    wT = target.sigma_T_e**2 + target.sigma_T_p**2
    wS = target.sigma_S_e**2 + target.sigma_S_p**2
    wQ = target.Q_sigma_sv**2

    def cost(x):
        try:
            p = ModelParams(*np.exp(x))
            dT_eq, dS_eq, q_eq = equilibrium_for_params(p, g, c, f_mean)
        except EquilibriumNotFoundError:
            return 1.0e12
        return (
            (target.dT_star - dT_eq) ** 2 / wT
            + (target.dS_star - dS_eq) ** 2 / wS
            + (target.Q_target_sv - q_eq) ** 2 / wQ
        )

    if x0 is None:
        x0 = _balance_guess(target, g, c, f_mean)
    result = nelder_mead(cost, x0, opts)
    kT, kS, gamma = np.exp(result.x)
    return ModelParams(kT=float(kT), kS=float(kS), gamma=float(gamma))
