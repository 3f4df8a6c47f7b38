"""Dimensionless Stommel dynamics: equilibria, stability, bifurcation structure.

The reduced system

    dT/dt = eta1 - T*(1 + |T - S|)
    dS/dt = eta2 - S*(eta3 + |T - S|)

is piecewise smooth across the line T = S. Equilibrium transports solve the
two branch equations (one per sign of Psi = T - S); the stable branch on the
thermally driven side terminates on the discontinuity line at
eta2 = eta1*eta3 (a non-smooth fold) and folds back at a saddle-node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EquilibriumNotFoundError

TH = "TH"
SA = "SA"

STABLE_NODE = "stable-node"
STABLE_FOCUS = "stable-focus"
UNSTABLE = "unstable"
BOUNDARY = "boundary"


def autonomous_rhs(T, S, eta1, eta2, eta3):
    """Right-hand side of the autonomous dimensionless system."""
    q = np.abs(T - S)
    return eta1 - T * (1.0 + q), eta2 - S * (eta3 + q)


def divergence(T, S, eta3):
    """Trace of the Jacobian: -1 - eta3 - 3|T - S| (strictly negative)."""
    return -1.0 - eta3 - 3.0 * np.abs(T - S)


def nonautonomous_rhs(Psi, T, t, eta1_auto, eta2_auto, eta3, A, B, Omega):
    """Seasonally forced system in (Psi, T) coordinates.

    The oscillatory forcing enters the transport equation with amplitude
    ``A = B - Bhat`` and the temperature equation with amplitude ``B``.
    """
    sn = np.sin(Omega * t)
    dPsi = eta1_auto - eta2_auto + (T - Psi) * eta3 - T - Psi * np.abs(Psi) + A * sn
    dT = eta1_auto + B * sn - T * (1.0 + np.abs(Psi))
    return dPsi, dT


def th_branch(eta1, eta3, Psi):
    """eta2 on the thermally driven branch (Psi >= 0)."""
    Psi = np.asarray(Psi, dtype=float)
    if np.any(Psi < 0):
        raise ValueError("th_branch is defined for Psi >= 0")
    return -(Psi**2) - eta3 * Psi + eta1 * ((eta3 + Psi) / (1.0 + Psi))


def sa_branch(eta1, eta3, Psi):
    """eta2 on the salinity driven branch (Psi <= 0)."""
    Psi = np.asarray(Psi, dtype=float)
    if np.any(Psi > 0):
        raise ValueError("sa_branch is defined for Psi <= 0")
    return Psi**2 - eta3 * Psi + eta1 * ((eta3 - Psi) / (1.0 - Psi))


def nsf_point(eta1, eta3):
    """eta2 at which the stable branch terminates on the line T = S."""
    if eta1 < 0 or eta3 <= 0:
        raise ValueError("eta1 must be non-negative and eta3 positive")
    return eta1 * eta3


def classify_regime(Psi):
    """TH for positive transport, SA for negative; ties (Psi == 0) go to TH."""
    return TH if Psi >= 0.0 else SA


def _branch_eta2(psi, eta1, eta3):
    if psi >= 0.0:
        return -(psi * psi) - eta3 * psi + eta1 * ((eta3 + psi) / (1.0 + psi))
    return psi * psi - eta3 * psi + eta1 * ((eta3 - psi) / (1.0 - psi))


def _jacobian(T, S, eta3):
    """Jacobian of the autonomous system on the smooth piece containing (T, S)."""
    if T >= S:
        return np.array([[-1.0 - 2.0 * T + S, T], [-S, -eta3 - T + 2.0 * S]])
    return np.array([[-1.0 - S + 2.0 * T, -T], [S, -eta3 - 2.0 * S + T]])


def _stability(T, S, eta3):
    if T == S:
        return BOUNDARY
    J = _jacobian(T, S, eta3)
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if det <= 0.0 or tr >= 0.0:
        return UNSTABLE
    disc = tr * tr - 4.0 * det
    return STABLE_FOCUS if disc < 0.0 else STABLE_NODE


@dataclass(frozen=True)
class EquilibriumPoint:
    Psi: float
    T: float
    S: float
    regime: str
    stability: str


def _bisect(f, a, b, fa, fb, tol=1e-12, max_iter=200):
    """Refine a bracketed sign change down to an interval of width ``tol``."""
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if b - a < tol:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fa < 0.0) != (fm < 0.0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def find_equilibria(eta1, eta2, eta3, scan_points=10_000, tol=1e-12):
    """All equilibrium transports, with regime and stability labels.

    Roots of the branch equations are located by a dense sign-change scan
    over Psi in [-(eta1 + eta2 + 1), eta1 + eta2 + 1] followed by bisection.
    """
    if eta1 <= 0 or eta3 <= 0:
        raise ValueError("eta1 and eta3 must be positive")
    radius = abs(eta1) + abs(eta2) + 1.0
    grid = np.linspace(-radius, radius, scan_points)

    def resid(psi):
        return _branch_eta2(psi, eta1, eta3) - eta2

    values = np.array([resid(p) for p in grid])
    roots = []
    for i in range(len(grid) - 1):
        fa, fb = values[i], values[i + 1]
        if fa == 0.0:
            roots.append(grid[i])
        elif (fa < 0.0) != (fb < 0.0):
            roots.append(_bisect(resid, grid[i], grid[i + 1], fa, fb, tol=tol))
    if values[-1] == 0.0:
        roots.append(grid[-1])

    points = []
    for psi in roots:
        if points and abs(psi - points[-1].Psi) < 10 * tol:
            continue
        T = eta1 / (1.0 + abs(psi))
        S = eta2 / (eta3 + abs(psi))
        points.append(
            EquilibriumPoint(
                Psi=psi,
                T=T,
                S=S,
                regime=classify_regime(psi),
                stability=_stability(T, S, eta3),
            )
        )
    if not points:
        raise EquilibriumNotFoundError(
            f"no equilibria found scanning Psi in [{-radius}, {radius}] "
            f"({scan_points} points) for eta=({eta1}, {eta2}, {eta3})"
        )
    return points


def saddle_node(eta1, eta3, tol=1e-12):
    """Fold point (Psi_sn, eta2_sn) of the thermally driven branch.

    Exists when eta1 > eta3/(1 - eta3) with 0 < eta3 < 1, i.e. when the
    branch initially rises away from the discontinuity line.
    """
    if not (0.0 < eta3 < 1.0) or eta1 <= eta3 / (1.0 - eta3):
        raise EquilibriumNotFoundError(
            f"no fold on the TH branch for eta1={eta1}, eta3={eta3}"
        )

    def slope(psi):
        return -2.0 * psi - eta3 + eta1 * (1.0 - eta3) / (1.0 + psi) ** 2

    lo, f_lo = 0.0, slope(0.0)
    hi = 1.0
    for _ in range(200):
        f_hi = slope(hi)
        if f_hi < 0.0:
            break
        lo, f_lo = hi, f_hi
        hi *= 2.0
    else:
        raise EquilibriumNotFoundError("fold search failed to bracket the slope root")
    psi_sn = _bisect(slope, lo, hi, f_lo, f_hi, tol=tol)
    return psi_sn, float(th_branch(eta1, eta3, psi_sn))


@dataclass
class BifurcationDiagram:
    """Sampled equilibrium branches over an eta2 window at fixed eta1, eta3."""

    eta1: float
    eta3: float
    th_psi: np.ndarray
    th_eta2: np.ndarray
    th_stability: list
    sa_psi: np.ndarray
    sa_eta2: np.ndarray
    sa_stability: list
    nsf_eta2: float
    saddle: tuple | None  # (Psi_sn, eta2_sn) or None when outside the window


def bifurcation_diagram(eta1, eta3, eta2_range, resolution=400):
    """Assemble both branches with stability labels plus fold/NSF annotations."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lo, hi = float(min(eta2_range)), float(max(eta2_range))

    def grow(branch, sign):
        # extend |Psi| until the branch leaves the eta2 window on both ends
        extent = 1.0
        for _ in range(60):
            edge = float(branch(eta1, eta3, sign * extent))
            if (sign > 0 and edge < lo) or (sign < 0 and edge > hi):
                break
            extent *= 1.5
        return extent

    def stability_of(psi):
        T = eta1 / (1.0 + abs(psi))
        S = T - psi
        return _stability(T, S, eta3)

    psi_th = np.linspace(0.0, grow(th_branch, +1.0), resolution)
    eta2_th = th_branch(eta1, eta3, psi_th)
    keep = (eta2_th >= lo) & (eta2_th <= hi)
    psi_th, eta2_th = psi_th[keep], eta2_th[keep]

    psi_sa = np.linspace(-grow(sa_branch, -1.0), 0.0, resolution)
    eta2_sa = sa_branch(eta1, eta3, psi_sa)
    keep = (eta2_sa >= lo) & (eta2_sa <= hi)
    psi_sa, eta2_sa = psi_sa[keep], eta2_sa[keep]

    try:
        fold = saddle_node(eta1, eta3)
        if not (lo <= fold[1] <= hi):
            fold = None
    except EquilibriumNotFoundError:
        fold = None

    return BifurcationDiagram(
        eta1=eta1,
        eta3=eta3,
        th_psi=psi_th,
        th_eta2=eta2_th,
        th_stability=[stability_of(p) for p in psi_th],
        sa_psi=psi_sa,
        sa_eta2=eta2_sa,
        sa_stability=[stability_of(p) for p in psi_sa],
        nsf_eta2=nsf_point(eta1, eta3),
        saddle=fold,
    )


def integrate_autonomous(T, S, eta1, eta2, eta3, dt, n_steps):
    """Fixed-step RK4 on the autonomous dimensionless system (vectorized).

    ``T`` and ``S`` may be arrays of initial conditions; returns the final
    (T, S). Used by convergence and no-periodic-orbit checks.
    """
    T = np.array(T, dtype=float)
    S = np.array(S, dtype=float)
    half = 0.5 * dt
    sixth = dt / 6.0
    for _ in range(n_steps):
        k1T, k1S = autonomous_rhs(T, S, eta1, eta2, eta3)
        k2T, k2S = autonomous_rhs(T + half * k1T, S + half * k1S, eta1, eta2, eta3)
        k3T, k3S = autonomous_rhs(T + half * k2T, S + half * k2S, eta1, eta2, eta3)
        k4T, k4S = autonomous_rhs(T + dt * k3T, S + dt * k3S, eta1, eta2, eta3)
        T = T + sixth * (k1T + 2.0 * k2T + 2.0 * k3T + k4T)
        S = S + sixth * (k1S + 2.0 * k2S + 2.0 * k3S + k4S)
    return T, S
