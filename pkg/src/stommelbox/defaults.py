"""Reference configuration derived from the EN4 North-Atlantic analysis.

Box geometry, surface-forcing regression coefficients, observation error
levels and initial conditions follow the published EN4-based estimates for
the 2004-2022 window; they are the defaults for every experiment and are all
overridable through the CLI config.
"""

from __future__ import annotations

import numpy as np

from .core import (
    BoxGeometry,
    ClimateScenario,
    Harmonic,
    ModelContext,
    ModelParams,
    OceanState,
    PhysicalConstants,
    SurfaceForcing,
)

#: Box-averaged observation error standard deviations, order [Tp, Te, Sp, Se]
#: (degC, degC, ppt, ppt).
OBS_ERROR_STD = (0.3, 0.5, 0.07, 0.07)

#: Observed present-day overturning transport and its assumed uncertainty (Sv).
Q_OVERTURNING_SV = 18.0
Q_SIGMA_SV = 2.5

#: Relative spread assigned to the initial log-parameter ensemble
#: (0.26 in log space, i.e. roughly 30% relative error).
LOG_PARAM_STD = 0.26


def constants():
    return PhysicalConstants()


def geometry():
    """EN4-derived box dimensions (m)."""
    return BoxGeometry(dx=7274.0e3, dy_p=324.0e3, dy_e=2262.0e3, dz=3148.0)


def params():
    """Equilibrium-fit starting estimates of the model parameters (m s^-1)."""
    return ModelParams(kT=3.7e-6, kS=1.2e-6, gamma=2.0)


def initial_state():
    """January 2004 box-averaged temperatures and salinities."""
    return OceanState(Te=5.4, Tp=1.23, Se=35.15, Sp=34.82)


def forcing():
    """Seasonal regression coefficients of the box-surface series."""
    return SurfaceForcing(
        Te_a=Harmonic(c0=16.7, c_cos=-2.4, c_sin=-2.3),
        Tp_a=Harmonic(c0=1.5, c_cos=-1.5, c_sin=-1.1),
        Se_a=Harmonic(c0=35.77, c_cos=0.04, c_sin=0.05),
        Sp_a=Harmonic(c0=33.05, c_cos=0.22, c_sin=0.32),
    )


def scenario(enabled=False, warm_e=0.03, warm_p=0.06, melt_period_yr=10000.0):
    """Climate-change forcing: Greenland melt plus polar-amplified warming."""
    return ClimateScenario(
        enabled=enabled,
        onset_year=2022.0,
        warm_e=warm_e,
        warm_p=warm_p,
        ice_volume=2.9e6 * 1.0e9,  # 2.9e6 km^3 in m^3
        melt_period_yr=melt_period_yr,
    )


def context(params_override=None, scenario_override=None):
    """Full model context with the reference values."""
    return ModelContext(
        params=params_override or params(),
        geometry=geometry(),
        constants=constants(),
        forcing=forcing(),
        scenario=scenario_override or scenario(),
    )


def obs_covariance():
    """Diagonal observation error covariance, order [Tp, Te, Sp, Se]."""
    return np.diag(np.array(OBS_ERROR_STD, dtype=float) ** 2)


#: Default tipping sweep axes: melt periods (yr) and equatorial warming rates
#: (degC yr^-1); the polar rate is twice the equatorial one.
SWEEP_MELT_PERIODS_YR = (500.0, 1000.0, 2000.0, 4000.0, 7000.0, 10000.0, 15000.0)
SWEEP_WARMING_EQ = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07)


def experiment_config(**overrides):
    """Reference experiment setup (18 years of monthly assimilation, 100 members)."""
    from .experiments import ExperimentConfig

    base = dict(
        constants=constants(),
        geometry=geometry(),
        params=params(),
        forcing=forcing(),
        scenario=scenario(),
        initial_state=initial_state(),
        obs_error_std=OBS_ERROR_STD,
        M=100,
        seed=0,
        start_year=2004.0,
        da_end_year=2022.0,
        end_year=2104.0,
        da_enabled=True,
        log_param_std=LOG_PARAM_STD,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def calibration_target():
    """Initial-condition differences and transport used by the parameter fit."""
    from .calibrate import CalibrationTarget

    init = initial_state()
    tp_std, te_std, sp_std, se_std = OBS_ERROR_STD
    return CalibrationTarget(
        dT_star=init.Te - init.Tp,
        dS_star=init.Se - init.Sp,
        sigma_T_e=te_std,
        sigma_T_p=tp_std,
        sigma_S_e=se_std,
        sigma_S_p=sp_std,
        Q_target_sv=Q_OVERTURNING_SV,
        Q_sigma_sv=Q_SIGMA_SV,
    )
