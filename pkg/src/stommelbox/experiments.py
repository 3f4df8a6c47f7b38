"""Experiment harness: twin runs, real-data assimilation, tipping sweeps.

A run covers a monthly-stepped window from ``start_year`` to ``end_year``
with analysis updates in the assimilation sub-window. Climate forcing, when
enabled, starts at its onset (at or after the end of assimilation) and is
shared bit-identically by all ensemble members. Flips are diagnosed from the
sign of the dimensional transport sampled monthly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import core, etkf
from .core import MONTH_SECONDS, ModelContext, OceanState, year_to_seconds
from .etkf import AugmentedState, Ensemble, FilterDiagnostics, ObservationBatch

THREADS_ENV = "STOMMEL_DA_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one assimilation/projection run."""

    constants: core.PhysicalConstants
    geometry: core.BoxGeometry
    params: core.ModelParams
    forcing: core.SurfaceForcing
    scenario: core.ClimateScenario
    initial_state: OceanState
    obs_error_std: tuple  # (Tp, Te, Sp, Se)
    M: int = 100
    seed: int = 0
    start_year: float = 2004.0
    da_end_year: float = 2022.0
    end_year: float = 2104.0
    da_enabled: bool = True
    log_param_std: float = 0.26

    def __post_init__(self):
        if not (self.start_year <= self.da_end_year <= self.end_year):
            raise ValueError("need start_year <= da_end_year <= end_year")
        if self.scenario.enabled and self.scenario.onset_year < self.da_end_year:
            raise ValueError("climate forcing must not start before the end of assimilation")

    @property
    def n_months(self):
        return round((self.end_year - self.start_year) * 12)

    @property
    def n_da_months(self):
        return round((self.da_end_year - self.start_year) * 12)

    @property
    def start_seconds(self):
        return year_to_seconds(self.start_year)

    def context(self, scenario=None):
        return ModelContext(
            params=self.params,
            geometry=self.geometry,
            constants=self.constants,
            forcing=self.forcing,
            scenario=self.scenario if scenario is None else scenario,
        )

    def sigma_d(self):
        return np.diag(np.asarray(self.obs_error_std, dtype=float) ** 2)


@dataclass
class RunResult:
    """Monthly series of a whole run; at update times the post-update value is stored."""

    times: np.ndarray        # (n,) model seconds
    states: np.ndarray       # (n, M, 4)
    log_params: np.ndarray   # (n, M, 3)
    psi: np.ndarray          # (n, M) dimensional transport, m^3 s^-1
    mode_ocean: np.ndarray   # (n, 4) ensemble-mean ocean fields
    mode_params: np.ndarray  # (n, 3) log-normal parameter modes (m s^-1)
    diagnostics: FilterDiagnostics
    da_end_time: float
    config: ExperimentConfig
    truth_states: np.ndarray | None = None      # (n, 4) in twin mode
    truth_log_params: np.ndarray | None = None  # (3,)
    truth_psi: np.ndarray | None = None         # (n,)
    innovations: np.ndarray | None = None       # (n_updates, 4) real mode
    flip_events: list = field(default_factory=list)  # (member, time) first flips

    @property
    def M(self):
        return self.states.shape[1]

    def years(self):
        return core.EPOCH_YEAR + self.times / core.YEAR_SECONDS


def _transport_series(states, gamma, g, c):
    """Dimensional transport of a (n, M, 4) block with per-member gamma (M,)."""
    rho_e = c.rho0 * (1.0 - c.alphaT * (states[..., 0] - c.T0) + c.alphaS * (states[..., 2] - c.S0))
    rho_p = c.rho0 * (1.0 - c.alphaT * (states[..., 1] - c.T0) + c.alphaS * (states[..., 3] - c.S0))
    return gamma * g.dx * g.dz * (rho_p - rho_e) / c.rho0


def _param_modes(log_params):
    """Log-normal modes exp(mu - Sigma 1) per time of a (n, M, 3) block."""
    M = log_params.shape[1]
    mu = log_params.mean(axis=1)
    z = log_params - mu[:, None, :]
    rowsums = np.einsum("nmi,nm->ni", z, z.sum(axis=2)) / (M - 1)
    return np.exp(mu - rowsums)


def _first_flips(times, psi, start_index):
    """First regime change per member at/after ``start_index`` (ties count as TH)."""
    regime = psi[start_index:] >= 0.0
    changed = regime[1:] != regime[:-1]
    events = []
    for m in np.nonzero(changed.any(axis=0))[0]:
        k = int(np.argmax(changed[:, m]))
        events.append((int(m), float(times[start_index + 1 + k])))
    return events


def _run_engine(cfg, ens, truth, get_obs):
    """Forecast/update cycle followed by a free projection.

    ``get_obs(k, truth_obs)`` returns the ObservationBatch for month ``k`` or
    None for a gap month. ``truth`` is an AugmentedState to propagate
    alongside (twin mode) or None.
    """
    n_total, n_da = cfg.n_months, cfg.n_da_months
    ctx = cfg.context()
    t0 = cfg.start_seconds
    dt = MONTH_SECONDS

    states = np.empty((n_total + 1, cfg.M, 4))
    logs = np.empty((n_total + 1, cfg.M, 3))
    states[0] = ens.ocean_block()
    logs[0] = ens.members[:, 4:]
    truth_states = None
    truth_arr = None
    truth_pars = None
    if truth is not None:
        truth_states = np.empty((n_total + 1, 4))
        truth_arr = truth.ocean.as_array()[None, :]
        truth_states[0] = truth_arr[0]
        p = truth.params
        truth_pars = (np.array([p.kT]), np.array([p.kS]), np.array([p.gamma]))
    innovations = []

    n_loop = n_da if cfg.da_enabled else 0
    for k in range(1, n_loop + 1):
        ens = etkf.forecast_step(ens, dt, ctx)
        if truth is not None:
            truth_arr = core.propagate_ensemble(
                truth_arr, *truth_pars, t0 + (k - 1) * dt, dt, 1, ctx
            )[-1]
            truth_states[k] = truth_arr[0]
        obs = get_obs(k, None if truth is None else truth_arr[0][[1, 0, 3, 2]])
        if obs is not None:
            innovations.append(obs.d - ens.mean()[list(etkf.OBS_INDICES)])
            ens = etkf.analysis_update(ens, obs)
        states[k] = ens.ocean_block()
        logs[k] = ens.members[:, 4:]

    # free projection (or the whole window when assimilation is off)
    if n_loop < n_total:
        n_rest = n_total - n_loop
        pars = ens.param_values()
        block = core.propagate_ensemble(
            ens.ocean_block(), pars[:, 0], pars[:, 1], pars[:, 2],
            t0 + n_loop * dt, dt, n_rest, ctx,
        )
        states[n_loop + 1 :] = block[1:]
        logs[n_loop + 1 :] = logs[n_loop]
        members = ens.members.copy()
        members[:, :4] = block[-1]
        ens = Ensemble(members=members, time=t0 + n_total * dt, seed=ens.seed)
        if truth is not None:
            tblock = core.propagate_ensemble(
                truth_arr, *truth_pars, t0 + n_loop * dt, dt, n_rest, ctx
            )
            truth_states[n_loop + 1 :] = tblock[1:, 0, :]

    times = t0 + dt * np.arange(n_total + 1)
    gam = np.exp(logs[:, :, 2])
    psi = _transport_series(states, gam, cfg.geometry, cfg.constants)

    aug = np.concatenate([states, logs], axis=2)
    spread = aug.std(axis=1, ddof=1)
    rmse = None
    truth_logs = None
    truth_psi = None
    if truth is not None:
        truth_logs = np.array([truth.log_kT, truth.log_kS, truth.log_gamma])
        truth_aug = np.concatenate(
            [truth_states, np.broadcast_to(truth_logs, (n_total + 1, 3))], axis=1
        )
        rmse = np.abs(aug.mean(axis=1) - truth_aug)
        truth_psi = _transport_series(
            truth_states[:, None, :], np.exp(truth_logs[2]), cfg.geometry, cfg.constants
        )[:, 0]

    da_end_time = t0 + cfg.n_da_months * dt
    start_index = cfg.n_da_months
    return RunResult(
        times=times,
        states=states,
        log_params=logs,
        psi=psi,
        mode_ocean=states.mean(axis=1),
        mode_params=_param_modes(logs),
        diagnostics=FilterDiagnostics(times=times, spread=spread, rmse=rmse),
        da_end_time=da_end_time,
        config=cfg,
        truth_states=truth_states,
        truth_log_params=truth_logs,
        truth_psi=truth_psi,
        innovations=np.array(innovations) if innovations else None,
        flip_events=_first_flips(times, psi, start_index),
    )


def twin_experiment(cfg):
    """Observing-system simulation: one synthetic truth, M assimilating members.

    Draws M + 1 members from the shared seed stream; the first becomes the
    truth, is withheld from the filter, and generates the monthly synthetic
    observations (truth plus Gaussian observation noise) over the
    assimilation window.
    """
    if cfg.M < 3:
        raise ValueError("twin experiments need M >= 3")
    rng = np.random.default_rng(cfg.seed)
    sigma_d = cfg.sigma_d()
    all_members = etkf.init_ensemble(
        cfg.initial_state, sigma_d, cfg.params, cfg.log_param_std, cfg.M + 1, rng
    )
    truth = AugmentedState.from_vector(all_members.members[0])
    ens = Ensemble(members=all_members.members[1:], time=cfg.start_seconds, seed=cfg.seed)

    std = np.sqrt(np.diag(sigma_d))
    noise = rng.standard_normal((cfg.n_da_months, 4)) * std

    def get_obs(k, truth_obs):
        d = truth_obs + noise[k - 1]
        return ObservationBatch(d=d, sigma_d=sigma_d, time=cfg.start_seconds + k * MONTH_SECONDS)

    return _run_engine(cfg, ens, truth, get_obs)


def real_experiment(cfg, obs_series, forcing=None):
    """Assimilate an observed box-averaged series; months without data are skipped.

    ``forcing`` (e.g. the seasonal fit produced alongside the series)
    overrides the configured surface forcing; the series' own error
    covariance replaces the configured one.
    """
    if forcing is not None:
        cfg = replace(cfg, forcing=forcing)
    cfg = replace(
        cfg, obs_error_std=tuple(np.sqrt(np.diag(obs_series.sigma_d)))
    )
    rng = np.random.default_rng(cfg.seed)
    ens = etkf.init_ensemble(
        cfg.initial_state, obs_series.sigma_d, cfg.params, cfg.log_param_std, cfg.M, rng
    )
    ens = Ensemble(members=ens.members, time=cfg.start_seconds, seed=cfg.seed)

    month0 = round((cfg.start_year - core.EPOCH_YEAR) * 12)
    by_month = {int(m): i for i, m in enumerate(obs_series.months)}

    def get_obs(k, _unused):
        i = by_month.get(month0 + k)
        if i is None:
            return None
        return ObservationBatch(
            d=obs_series.d[i],
            sigma_d=obs_series.sigma_d,
            time=cfg.start_seconds + k * MONTH_SECONDS,
        )

    return _run_engine(cfg, ens, None, get_obs)


def flip_fraction(result, horizon=None):
    """Fraction of members whose transport changes sign after assimilation.

    ``horizon`` is a model time in seconds (default: end of the series); only
    sign changes at or before it count.
    """
    times = result.times
    start = int(np.searchsorted(times, result.da_end_time))
    stop = len(times) - 1 if horizon is None else int(np.searchsorted(times, horizon))
    if stop <= start:
        return 0.0
    regime = result.psi[start : stop + 1] >= 0.0
    flipped = (regime[1:] != regime[:-1]).any(axis=0)
    return float(flipped.mean())


@dataclass
class SweepGrid:
    """Flip fractions over (melt period x equatorial warming rate) cells."""

    melt_periods_yr: np.ndarray
    warming_rates_eq: np.ndarray
    flip_fraction: np.ndarray  # (len(melt), len(warming)), NaN for failed cells
    failures: list = field(default_factory=list)


def _max_workers():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def scenario_sweep(cfg, melt_periods_yr, warming_rates_eq, obs_series=None, forcing=None):
    """Flip fraction per climate scenario, reusing one shared assimilation phase.

    The assimilation window is scenario-independent (forcing changes start
    only afterwards), so it runs once; each grid cell then projects the
    terminal ensemble to ``end_year`` under its own melt period and warming
    rates (polar rate = twice the equatorial one).
    """
    melt_periods_yr = np.asarray(melt_periods_yr, dtype=float)
    warming_rates_eq = np.asarray(warming_rates_eq, dtype=float)
    if melt_periods_yr.size == 0 or warming_rates_eq.size == 0:
        raise ValueError("sweep grid must be non-empty")

    da_cfg = replace(cfg, end_year=cfg.da_end_year)
    if obs_series is None:
        da_result = twin_experiment(da_cfg)
    else:
        da_result = real_experiment(da_cfg, obs_series, forcing=forcing)

    states0 = da_result.states[-1]
    logs0 = da_result.log_params[-1]
    pars = np.exp(logs0)
    t_da = da_result.da_end_time
    n_rest = round((cfg.end_year - cfg.da_end_year) * 12)
    g, c = cfg.geometry, cfg.constants

    def run_cell(melt_yr, warm_eq):
        scen = replace(
            cfg.scenario,
            enabled=True,
            onset_year=cfg.da_end_year,
            warm_e=warm_eq,
            warm_p=2.0 * warm_eq,
            melt_period_yr=melt_yr,
        )
        block = core.propagate_ensemble(
            states0, pars[:, 0], pars[:, 1], pars[:, 2],
            t_da, MONTH_SECONDS, n_rest, cfg.context(scenario=scen),
        )
        psi = _transport_series(block, pars[:, 2], g, c)
        regime = psi >= 0.0
        flipped = (regime[1:] != regime[:-1]).any(axis=0)
        return float(flipped.mean())

    cells = [(i, j, mp, wr)
             for i, mp in enumerate(melt_periods_yr)
             for j, wr in enumerate(warming_rates_eq)]
    grid = np.full((len(melt_periods_yr), len(warming_rates_eq)), np.nan)
    failures = []

    def safe(cell):
        i, j, mp, wr = cell
        try:
            return i, j, run_cell(mp, wr), None
        except Exception as exc:  # record and continue with the rest of the grid
            return i, j, np.nan, f"cell ({mp} yr, {wr} degC/yr): {exc}"

    workers = _max_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(safe, cells))
    else:
        results = [safe(cell) for cell in cells]
    for i, j, value, err in results:
        grid[i, j] = value
        if err is not None:
            failures.append(err)
    return SweepGrid(
        melt_periods_yr=melt_periods_yr,
        warming_rates_eq=warming_rates_eq,
        flip_fraction=grid,
        failures=failures,
    )
