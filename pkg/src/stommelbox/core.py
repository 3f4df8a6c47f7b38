"""Dimensional Stommel 2-box dynamics.

Two well-mixed boxes (equatorial and polar) exchange heat and salt through
surface relaxation toward prescribed targets, advective exchange driven by
the density contrast, and an optional freshwater (ice-melt) sink in the
polar box. The module provides the value types, the right-hand side, a
fixed-step RK4 integrator and the conversion to/from the reduced
dimensionless system.

Time convention: model time is in seconds since January 2004; one year is
365.25 days and one month is a twelfth of that.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import BlowupError, UnphysicalStateWarning

YEAR_SECONDS = 365.25 * 86400.0
MONTH_SECONDS = YEAR_SECONDS / 12.0
EPOCH_YEAR = 2004.0  # calendar year at model time t = 0
SV = 1.0e6  # m^3 s^-1 per Sverdrup

STATE_FIELDS = ("Te", "Tp", "Se", "Sp")


def year_to_seconds(year):
    """Model time (s) of a calendar year (e.g. 2022.0)."""
    return (year - EPOCH_YEAR) * YEAR_SECONDS


def seconds_to_year(t):
    """Calendar year of a model time in seconds."""
    return EPOCH_YEAR + t / YEAR_SECONDS


@dataclass(frozen=True)
class PhysicalConstants:
    """Reference values of the linear equation of state.

    ``alphaT`` and ``alphaS`` are the thermal/haline expansion coefficients;
    the common literature values are quoted as the products rho0*alphaT =
    0.15 kg m^-3 degC^-1 and rho0*alphaS = 0.78 kg m^-3 ppt^-1, which the
    defaults divide back out.
    """

    rho0: float = 1027.0  # kg m^-3
    T0: float = 10.0      # degC
    S0: float = 35.0      # ppt
    alphaT: float = 0.15 / 1027.0  # degC^-1
    alphaS: float = 0.78 / 1027.0  # ppt^-1

    def __post_init__(self):
        if not (self.rho0 > 0 and self.alphaT > 0 and self.alphaS > 0):
            raise ValueError("rho0, alphaT and alphaS must be strictly positive")


@dataclass(frozen=True)
class BoxGeometry:
    """Box dimensions in metres: zonal width, meridional widths, depth."""

    dx: float
    dy_p: float
    dy_e: float
    dz: float

    def __post_init__(self):
        if min(self.dx, self.dy_p, self.dy_e, self.dz) <= 0:
            raise ValueError("all box dimensions must be strictly positive")

    @property
    def dy_bar(self):
        """Harmonic combination dy_p*dy_e/(dy_p+dy_e); always < min(dy_p, dy_e)."""
        return self.dy_p * self.dy_e / (self.dy_p + self.dy_e)


@dataclass(frozen=True)
class ModelParams:
    """Surface diffusion velocities and advective transport coefficient (m s^-1)."""

    kT: float
    kS: float
    gamma: float

    def __post_init__(self):
        if min(self.kT, self.kS, self.gamma) <= 0:
            raise ValueError("kT, kS and gamma must be strictly positive")


@dataclass(frozen=True)
class OceanState:
    """Box temperatures (degC) and salinities (ppt)."""

    Te: float
    Tp: float
    Se: float
    Sp: float

    def as_array(self):
        return np.array([self.Te, self.Tp, self.Se, self.Sp], dtype=float)

    @classmethod
    def from_array(cls, arr):
        Te, Tp, Se, Sp = (float(v) for v in arr)
        return cls(Te, Tp, Se, Sp)


@dataclass(frozen=True)
class Harmonic:
    """Annual-harmonic surface target: c0 + c_cos*cos(2 pi t/tau) + c_sin*sin(2 pi t/tau)."""

    c0: float
    c_cos: float = 0.0
    c_sin: float = 0.0

    @property
    def amplitude(self):
        return math.hypot(self.c_cos, self.c_sin)


@dataclass(frozen=True)
class SurfaceForcing:
    """Seasonal surface relaxation targets for both boxes.

    Each field holds the regression coefficients of the corresponding
    box-surface series; ``tau`` is the period of the harmonic (one year).
    """

    Te_a: Harmonic
    Tp_a: Harmonic
    Se_a: Harmonic
    Sp_a: Harmonic
    tau: float = YEAR_SECONDS

    def annual_mean(self):
        """Forcing with the seasonal coefficients zeroed (c0 terms only)."""
        return SurfaceForcing(
            Te_a=Harmonic(self.Te_a.c0),
            Tp_a=Harmonic(self.Tp_a.c0),
            Se_a=Harmonic(self.Se_a.c0),
            Sp_a=Harmonic(self.Sp_a.c0),
            tau=self.tau,
        )


@dataclass(frozen=True)
class ClimateScenario:
    """Linear surface warming plus constant ice-sheet melt, starting at ``onset_year``.

    Warming rates are added to the temperature relaxation targets only; the
    melt enters the polar salinity budget as a virtual salt sink at constant
    box volume.
    """

    enabled: bool = False
    onset_year: float = 2022.0
    warm_e: float = 0.03   # degC yr^-1, equatorial box
    warm_p: float = 0.06   # degC yr^-1, polar box
    ice_volume: float = 2.9e15  # m^3
    melt_period_yr: float = 10000.0

    def __post_init__(self):
        if self.warm_e < 0 or self.warm_p < 0:
            raise ValueError("warming rates must be non-negative")
        if self.melt_period_yr <= 0:
            raise ValueError("melt period must be positive")
        if self.ice_volume < 0:
            raise ValueError("ice volume must be non-negative")

    @property
    def onset_seconds(self):
        return year_to_seconds(self.onset_year)


@dataclass(frozen=True)
class ModelContext:
    """Everything the right-hand side needs besides the state."""

    params: ModelParams
    geometry: BoxGeometry
    constants: PhysicalConstants
    forcing: SurfaceForcing
    scenario: ClimateScenario = ClimateScenario()

    def with_params(self, params):
        return replace(self, params=params)


@dataclass
class Trajectory:
    """Uniformly sampled model run: times (s) and states, one row per sample."""

    times: np.ndarray   # (n,)
    states: np.ndarray  # (n, 4) columns Te, Tp, Se, Sp
    dt: float

    def __len__(self):
        return len(self.times)

    def state(self, i):
        return OceanState.from_array(self.states[i])

    @property
    def final_state(self):
        return self.state(len(self) - 1)


def density(T, S, c):
    """Linear equation of state: rho0*(1 - alphaT*(T - T0) + alphaS*(S - S0))."""
    return c.rho0 * (1.0 - c.alphaT * (T - c.T0) + c.alphaS * (S - c.S0))


def transport(state, p, g, c):
    """Volume flux between the boxes (m^3 s^-1), positive when the polar box is denser."""
    rho_e = density(state.Te, state.Se, c)
    rho_p = density(state.Tp, state.Sp, c)
    return p.gamma * g.dx * g.dz * (rho_p - rho_e) / c.rho0


def surface_target(t, f, s):
    """Surface relaxation targets (Te_a, Tp_a, Se_a, Sp_a) at model time ``t``.

    Seasonal harmonics always apply; when the scenario is enabled and
    ``t`` is past its onset, the linear warming ramp is added to the
    temperature targets only.
    """
    arg = 2.0 * math.pi * t / f.tau
    sn = math.sin(arg)
    cs = math.cos(arg)
    te = f.Te_a.c0 + f.Te_a.c_sin * sn + f.Te_a.c_cos * cs
    tp = f.Tp_a.c0 + f.Tp_a.c_sin * sn + f.Tp_a.c_cos * cs
    se = f.Se_a.c0 + f.Se_a.c_sin * sn + f.Se_a.c_cos * cs
    sp = f.Sp_a.c0 + f.Sp_a.c_sin * sn + f.Sp_a.c_cos * cs
    if s.enabled and t >= s.onset_seconds:
        dt_yr = (t - s.onset_seconds) / YEAR_SECONDS
        te = te + s.warm_e * dt_yr
        tp = tp + s.warm_p * dt_yr
    return te, tp, se, sp


def melt_rate(s, t):
    """Freshwater discharge into the polar box (m^3 s^-1); zero before onset."""
    if not s.enabled or t < s.onset_seconds:
        return 0.0
    return s.ice_volume / (s.melt_period_yr * YEAR_SECONDS)


def tendencies(t, state, ctx):
    """Time derivatives of the four box variables (degC s^-1, ppt s^-1).

    Advection always mixes toward the other box (it uses the magnitude of the
    transport), surface exchange relaxes toward the targets, and the melt
    term removes salt from the polar box at constant volume.
    """
    p, g, c = ctx.params, ctx.geometry, ctx.constants
    te_a, tp_a, se_a, sp_a = surface_target(t, ctx.forcing, ctx.scenario)
    m = melt_rate(ctx.scenario, t)
    q = abs(transport(state, p, g, c))
    vol_e = g.dx * g.dz * g.dy_e
    vol_p = g.dx * g.dz * g.dy_p
    dTe = p.kT * (te_a - state.Te) / g.dz + q * (state.Tp - state.Te) / vol_e
    dSe = p.kS * (se_a - state.Se) / g.dz + q * (state.Sp - state.Se) / vol_e
    dTp = p.kT * (tp_a - state.Tp) / g.dz + q * (state.Te - state.Tp) / vol_p
    dSp = (
        p.kS * (sp_a - state.Sp) / g.dz
        + q * (state.Se - state.Sp) / vol_p
        - m * state.Sp / vol_p
    )
    return dTe, dTp, dSe, dSp


def step_rk4(state, t, dt, ctx):
    """One classical RK4 step of length ``dt`` starting at time ``t``.

    The transport magnitude is evaluated as-is at every stage; no event
    localization is attempted at sign changes.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    half = 0.5 * dt
    k1 = tendencies(t, state, ctx)
    s2 = OceanState(
        state.Te + half * k1[0],
        state.Tp + half * k1[1],
        state.Se + half * k1[2],
        state.Sp + half * k1[3],
    )
    k2 = tendencies(t + half, s2, ctx)
    s3 = OceanState(
        state.Te + half * k2[0],
        state.Tp + half * k2[1],
        state.Se + half * k2[2],
        state.Sp + half * k2[3],
    )
    k3 = tendencies(t + half, s3, ctx)
    s4 = OceanState(
        state.Te + dt * k3[0],
        state.Tp + dt * k3[1],
        state.Se + dt * k3[2],
        state.Sp + dt * k3[3],
    )
    k4 = tendencies(t + dt, s4, ctx)
    sixth = dt / 6.0
    out = OceanState(
        state.Te + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state.Tp + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        state.Se + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        state.Sp + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    )
    if not all(map(math.isfinite, (out.Te, out.Tp, out.Se, out.Sp))):
        raise BlowupError(f"non-finite state after RK4 step at t={t}")
    return out


def _kernel_args(ctx):
    p, g, c, f, s = ctx.params, ctx.geometry, ctx.constants, ctx.forcing, ctx.scenario
    forcing_coeffs = np.array(
        [
            [f.Te_a.c0, f.Te_a.c_cos, f.Te_a.c_sin],
            [f.Tp_a.c0, f.Tp_a.c_cos, f.Tp_a.c_sin],
            [f.Se_a.c0, f.Se_a.c_cos, f.Se_a.c_sin],
            [f.Sp_a.c0, f.Sp_a.c_cos, f.Sp_a.c_sin],
        ],
        dtype=float,
    )
    melt = s.ice_volume / (s.melt_period_yr * YEAR_SECONDS) if s.enabled else 0.0
    scen = _kernels.ScenarioArgs(
        active=1 if s.enabled else 0,
        onset_t=s.onset_seconds,
        warm_e_per_yr=s.warm_e,
        warm_p_per_yr=s.warm_p,
        year_seconds=YEAR_SECONDS,
        melt=melt,
    )
    return _kernels.KernelArgs(
        dx=g.dx,
        dy_p=g.dy_p,
        dy_e=g.dy_e,
        dz=g.dz,
        rho0=c.rho0,
        T0=c.T0,
        S0=c.S0,
        alphaT=c.alphaT,
        alphaS=c.alphaS,
        forcing=forcing_coeffs,
        tau=f.tau,
        scenario=scen,
    )


def propagate_ensemble(states, kT, kS, gamma, t0, dt, n_steps, ctx):
    """Advance an ensemble of box states with per-member parameters.

    ``states`` is (M, 4) with columns Te, Tp, Se, Sp; ``kT``, ``kS`` and
    ``gamma`` are (M,). Returns the recorded block of shape
    (n_steps + 1, M, 4) including the initial states. Dispatches to the
    compiled kernel when available.
    """
    out = _kernels.propagate_ensemble(
        np.ascontiguousarray(states, dtype=float),
        np.ascontiguousarray(kT, dtype=float),
        np.ascontiguousarray(kS, dtype=float),
        np.ascontiguousarray(gamma, dtype=float),
        float(t0),
        float(dt),
        int(n_steps),
        _kernel_args(ctx),
    )
    if not np.isfinite(out[-1]).all():
        bad = np.nonzero(~np.isfinite(out[-1]).all(axis=1))[0]
        raise BlowupError(f"non-finite state in members {bad.tolist()} after propagation")
    if (out[..., 2:] < 0.0).any():
        warnings.warn(
            "trajectory reached negative salinity (unphysical forcing regime)",
            UnphysicalStateWarning,
            stacklevel=2,
        )
    return out


def integrate(state0, t0, t1, dt, ctx, record=True):
    """Integrate from ``t0`` to ``t1`` with uniform RK4 steps of ``dt``.

    The last step is shortened so the trajectory lands on ``t1`` exactly.
    With ``record=False`` only the first and last samples are kept.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    span = t1 - t0
    n_full = int(span // dt)
    rem = span - n_full * dt
    if rem <= dt * 1e-9:
        rem = 0.0

    member = state0.as_array()[None, :]
    p = ctx.params
    one = np.array([1.0])
    times = [t0]
    blocks = [member.copy()]
    if n_full > 0:
        block = propagate_ensemble(
            member, one * p.kT, one * p.kS, one * p.gamma, t0, dt, n_full, ctx
        )
        member = block[-1]
        if record:
            times.extend(t0 + (k + 1) * dt for k in range(n_full))
            blocks.append(block[1:, :, :].reshape(n_full, 4))
        else:
            times.append(t0 + n_full * dt)
            blocks.append(block[-1])
    if rem > 0.0:
        block = propagate_ensemble(
            member, one * p.kT, one * p.kS, one * p.gamma, t0 + n_full * dt, rem, 1, ctx
        )
        times.append(t1)
        blocks.append(block[-1])
    states = np.vstack(blocks)
    return Trajectory(times=np.array(times, dtype=float), states=states, dt=dt)


# ---------------------------------------------------------------------------
# Dimensionless reduction


@dataclass(frozen=True)
class DimensionlessState:
    """State and forcing of the reduced two-variable system.

    ``T`` and ``S`` scale the between-box temperature and salinity
    differences; ``Psi = T - S`` is the dimensionless transport. ``eta1``,
    ``eta2`` and ``eta3`` are the constant forcing parameters of the
    autonomous reduction, and ``Omega``, ``B``, ``Bhat``, ``A`` describe the
    seasonal perturbation in the non-autonomous variant.
    """

    T: float
    S: float
    Psi: float
    eta1: float
    eta2: float
    eta3: float
    Omega: float
    B: float
    Bhat: float
    A: float


def _temp_scale(p, g, c):
    """Multiplier turning a temperature difference (degC) into dimensionless T."""
    return g.dz * p.gamma * c.alphaT / (g.dy_bar * p.kT)


def _salt_scale(p, g, c):
    """Multiplier turning a salinity difference (ppt) into dimensionless S."""
    return g.dz * p.gamma * c.alphaS / (g.dy_bar * p.kT)


def psi_scale(p, g):
    """Dimensional transport (m^3 s^-1) per unit of dimensionless Psi."""
    return g.dy_bar * g.dx * p.kT


def nondimensionalize(state, p, g, c, f):
    """Map a dimensional state and forcing onto the reduced system.

    The forcing parameters use the annual-mean targets for eta1/eta2 and the
    amplitude of the seasonal *difference* between the box targets for the
    oscillatory coefficients B and Bhat.
    """
    if p.kT <= 0:
        raise ValueError("kT must be positive")
    ct = _temp_scale(p, g, c)
    cs = _salt_scale(p, g, c)
    T = ct * (state.Te - state.Tp)
    S = cs * (state.Se - state.Sp)
    eta3 = p.kS / p.kT
    eta1 = ct * (f.Te_a.c0 - f.Tp_a.c0)
    eta2 = eta3 * cs * (f.Se_a.c0 - f.Sp_a.c0)
    omega = (2.0 * math.pi / f.tau) * (g.dz / p.kT)
    b_dim = math.hypot(f.Te_a.c_cos - f.Tp_a.c_cos, f.Te_a.c_sin - f.Tp_a.c_sin)
    bhat_dim = math.hypot(f.Se_a.c_cos - f.Sp_a.c_cos, f.Se_a.c_sin - f.Sp_a.c_sin)
    B = ct * b_dim
    Bhat = eta3 * cs * bhat_dim
    return DimensionlessState(
        T=T, S=S, Psi=T - S,
        eta1=eta1, eta2=eta2, eta3=eta3,
        Omega=omega, B=B, Bhat=Bhat, A=B - Bhat,
    )


def dimensionalize(d, p, g, c):
    """Between-box differences (Te - Tp, Se - Sp) of a dimensionless state."""
    ct = _temp_scale(p, g, c)
    cs = _salt_scale(p, g, c)
    return d.T / ct, d.S / cs
