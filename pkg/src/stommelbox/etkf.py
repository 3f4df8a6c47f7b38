"""Augmented ensemble transform Kalman filter.

The filter state stacks the four ocean variables with the natural logarithms
of the three model parameters (over a unit reference value), so one update
corrects state and parameters jointly while keeping the parameters strictly
positive. The analysis is a deterministic square-root update: the posterior
anomalies are the prior anomalies right-multiplied by the symmetric square
root of

    I - (HA)^T ((M-1) Sigma_d + HA (HA)^T)^(-1) (HA),

which reproduces the Kalman posterior covariance exactly in the linear case
and leaves the ensemble mean untouched when the innovation vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import ModelParams, OceanState
from .errors import DecompositionError

#: Augmented state layout.
AUG_FIELDS = ("Te", "Tp", "Se", "Sp", "log_kT", "log_kS", "log_gamma")

#: Observation vector layout [Tp, Te, Sp, Se] as column indices into the state.
OBS_INDICES = (1, 0, 3, 2)

#: Reference velocity dividing the parameters inside the logarithms (m s^-1).
REF_VELOCITY = 1.0


@dataclass(frozen=True)
class AugmentedState:
    """Ocean state plus log-transformed model parameters."""

    ocean: OceanState
    log_kT: float
    log_kS: float
    log_gamma: float

    @property
    def params(self):
        return ModelParams(
            kT=float(np.exp(self.log_kT)) * REF_VELOCITY,
            kS=float(np.exp(self.log_kS)) * REF_VELOCITY,
            gamma=float(np.exp(self.log_gamma)) * REF_VELOCITY,
        )

    def as_vector(self):
        return np.array(
            [
                self.ocean.Te,
                self.ocean.Tp,
                self.ocean.Se,
                self.ocean.Sp,
                self.log_kT,
                self.log_kS,
                self.log_gamma,
            ]
        )

    @classmethod
    def from_vector(cls, v):
        return cls(
            ocean=OceanState.from_array(v[:4]),
            log_kT=float(v[4]),
            log_kS=float(v[5]),
            log_gamma=float(v[6]),
        )


@dataclass
class Ensemble:
    """M equally likely augmented states at a common time."""

    members: np.ndarray  # (M, 7)
    time: float
    seed: int | None = None

    def __post_init__(self):
        self.members = np.asarray(self.members, dtype=float)
        if self.members.ndim != 2 or self.members.shape[1] != len(AUG_FIELDS):
            raise ValueError("members must have shape (M, 7)")
        if self.members.shape[0] < 2:
            raise ValueError("an ensemble needs at least 2 members")
        if not np.isfinite(self.members).all():
            raise ValueError("ensemble members must be finite")

    @property
    def M(self):
        return self.members.shape[0]

    def member(self, i):
        return AugmentedState.from_vector(self.members[i])

    def mean(self):
        return self.members.mean(axis=0)

    def ocean_block(self):
        return self.members[:, :4]

    def param_values(self):
        """Per-member (kT, kS, gamma) as an (M, 3) array."""
        return np.exp(self.members[:, 4:]) * REF_VELOCITY


@dataclass(frozen=True)
class ObservationBatch:
    """One monthly observation vector d = [Tp, Te, Sp, Se] with its covariance."""

    d: np.ndarray
    sigma_d: np.ndarray
    time: float

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        object.__setattr__(self, "sigma_d", np.asarray(self.sigma_d, dtype=float))
        if self.d.shape != (4,):
            raise ValueError("observation vector must have shape (4,)")
        if self.sigma_d.shape != (4, 4):
            raise ValueError("observation covariance must have shape (4, 4)")
        if np.any(np.diag(self.sigma_d) <= 0):
            raise ValueError("observation variances must be positive")


@dataclass
class FilterDiagnostics:
    """Per-variable ensemble spread and (in twin mode) error of the mean."""

    times: np.ndarray   # (n,)
    spread: np.ndarray  # (n, 7) ensemble standard deviation
    rmse: np.ndarray | None = None  # (n, 7) |ensemble mean - truth|

    @classmethod
    def concat(cls, parts):
        rmse = None
        if all(p.rmse is not None for p in parts):
            rmse = np.vstack([p.rmse for p in parts])
        return cls(
            times=np.concatenate([p.times for p in parts]),
            spread=np.vstack([p.spread for p in parts]),
            rmse=rmse,
        )


def init_ensemble(mean_state, sigma_d, params0, log_std, M, seed):
    """Draw an initial ensemble around a mean state and parameter estimate.

    Ocean fields are Gaussian with the observation error covariance; the
    log-parameters get independent Gaussian perturbations of width
    ``log_std``. The draw order is fixed, so a seed fully determines the
    ensemble; ``seed`` may also be a ``numpy.random.Generator`` to share a
    stream with the caller.
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    if log_std < 0:
        raise ValueError("log_std must be non-negative")
    sigma_d = np.asarray(sigma_d, dtype=float)
    if sigma_d.shape != (4, 4):
        raise ValueError("sigma_d must be a 4x4 covariance")
    rng = np.random.default_rng(seed)

    # reorder the obs covariance [Tp, Te, Sp, Se] into state order [Te, Tp, Se, Sp]
    perm = np.asarray(OBS_INDICES)
    inv = np.empty(4, dtype=int)
    inv[perm] = np.arange(4)
    cov_state = sigma_d[np.ix_(inv, inv)]
    if np.allclose(cov_state, np.diag(np.diag(cov_state))):
        L = np.diag(np.sqrt(np.diag(cov_state)))
    else:
        L = np.linalg.cholesky(cov_state)

    ocean = mean_state.as_array()[None, :] + rng.standard_normal((M, 4)) @ L.T
    logs0 = np.log(
        np.array([params0.kT, params0.kS, params0.gamma]) / REF_VELOCITY
    )
    logs = logs0[None, :] + log_std * rng.standard_normal((M, 3))
    members = np.hstack([ocean, logs])
    return Ensemble(
        members=members,
        time=0.0,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
    )


def forecast_step(ens, dt, ctx):
    """Advance every member by ``dt`` with its own (constant) parameters.

    Only the ocean fields evolve; the log-parameters change during analysis
    updates exclusively. A member producing non-finite values aborts the run.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pars = ens.param_values()
    block = core.propagate_ensemble(
        ens.ocean_block(), pars[:, 0], pars[:, 1], pars[:, 2], ens.time, dt, 1, ctx
    )
    members = ens.members.copy()
    members[:, :4] = block[-1]
    return Ensemble(members=members, time=ens.time + dt, seed=ens.seed)


def transform_update(X, obs_indices, d, sigma_d, clip_tol=1e-12):
    """Deterministic square-root analysis on a generic ensemble matrix.

    ``X`` is (M, n) with members as rows; ``obs_indices`` selects the
    observed components. Returns the posterior (M, n) matrix.
    """
    X = np.asarray(X, dtype=float)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    sigma_d = np.atleast_2d(np.asarray(sigma_d, dtype=float))
    M = X.shape[0]
    if M < 2:
        raise ValueError("the transform needs at least 2 members")
    p = len(obs_indices)
    if d.shape != (p,) or sigma_d.shape != (p, p):
        raise ValueError("observation vector/covariance dimensions do not match")

    mu = X.mean(axis=0)
    A = (X - mu).T  # (n, M) anomaly columns
    HA = A[list(obs_indices), :]  # (p, M)
    C = HA @ HA.T + (M - 1) * sigma_d
    try:
        sol_innov = np.linalg.solve(C, d - mu[list(obs_indices)])
        sol_HA = np.linalg.solve(C, HA)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(
            f"innovation covariance is singular (cond={np.linalg.cond(C):.3e})"
        ) from exc
    mean_shift = A @ (HA.T @ sol_innov)  # Kalman gain applied to the innovation

    theta = np.eye(M) - HA.T @ sol_HA
    w, Q = np.linalg.eigh(theta)
    if w.min() < -clip_tol:
        raise DecompositionError(
            f"transform matrix has eigenvalue {w.min():.3e} below -{clip_tol:.0e} "
            f"(cond of innovation covariance: {np.linalg.cond(C):.3e})"
        )
    w = np.clip(w, 0.0, None)
    W = (Q * np.sqrt(w)) @ Q.T  # symmetric square root, keeps the mean
    return (mu + mean_shift)[None, :] + (A @ W).T


def analysis_update(ens, obs):
    """Assimilate one observation batch into the ensemble."""
    members = transform_update(ens.members, OBS_INDICES, obs.d, obs.sigma_d)
    return Ensemble(members=members, time=ens.time, seed=ens.seed)


def most_likely(ens):
    """Mode of the ensemble distribution.

    Ocean fields are Gaussian, so their mode is the ensemble mean. The
    parameters are log-normal: the mode of each is exp(mu - (Sigma 1))
    evaluated with the ensemble mean and covariance of the log-parameters.
    """
    mu = ens.mean()
    logs = ens.members[:, 4:]
    sigma_p = np.cov(logs, rowvar=False, ddof=1)
    mode_log = mu[4:] - sigma_p @ np.ones(3)
    return AugmentedState(
        ocean=OceanState.from_array(mu[:4]),
        log_kT=float(mode_log[0]),
        log_kS=float(mode_log[1]),
        log_gamma=float(mode_log[2]),
    )


def diagnostics(ens, truth=None):
    """Single-time spread (and, given a truth, error of the ensemble mean)."""
    spread = ens.members.std(axis=0, ddof=1)
    rmse = None
    if truth is not None:
        rmse = np.abs(ens.mean() - truth.as_vector())[None, :]
    return FilterDiagnostics(
        times=np.array([ens.time]),
        spread=spread[None, :],
        rmse=rmse,
    )
