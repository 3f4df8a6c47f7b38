"""NumPy fallback kernel.

Keep the floating-point expressions in this module textually in sync with
``stommelbox.core.tendencies``/``step_rk4`` and with ``_fast.pyx``; the
kernel-equivalence tests assert bitwise agreement.
"""

from __future__ import annotations

import math

import numpy as np


def _targets(t, fc, tau, sc):
    """Surface targets (4 scalars) and melt rate at model time ``t``."""
    arg = 2.0 * math.pi * t / tau
    sn = math.sin(arg)
    cs = math.cos(arg)
    te = fc[0][0] + fc[0][2] * sn + fc[0][1] * cs
    tp = fc[1][0] + fc[1][2] * sn + fc[1][1] * cs
    se = fc[2][0] + fc[2][2] * sn + fc[2][1] * cs
    sp = fc[3][0] + fc[3][2] * sn + fc[3][1] * cs
    if sc.active and t >= sc.onset_t:
        dt_yr = (t - sc.onset_t) / sc.year_seconds
        te = te + sc.warm_e_per_yr * dt_yr
        tp = tp + sc.warm_p_per_yr * dt_yr
        m = sc.melt
    else:
        m = 0.0
    return te, tp, se, sp, m


def propagate_ensemble(states, kT, kS, gam, t0, dt, n_steps, args):
    M = states.shape[0]
    out = np.empty((n_steps + 1, M, 4), dtype=np.float64)
    out[0] = states

    dx = args.dx
    dz = args.dz
    rho0 = args.rho0
    T0 = args.T0
    S0 = args.S0
    aT = args.alphaT
    aS = args.alphaS
    vol_e = args.dx * args.dz * args.dy_e
    vol_p = args.dx * args.dz * args.dy_p
    fc = [[float(v) for v in row] for row in args.forcing]
    sc = args.scenario

    def tend(Te, Tp, Se, Sp, tg):
        tea, tpa, sea, spa, m = tg
        rho_e = rho0 * (1.0 - aT * (Te - T0) + aS * (Se - S0))
        rho_p = rho0 * (1.0 - aT * (Tp - T0) + aS * (Sp - S0))
        psi = gam * dx * dz * (rho_p - rho_e) / rho0
        q = np.abs(psi)
        dTe = kT * (tea - Te) / dz + q * (Tp - Te) / vol_e
        dSe = kS * (sea - Se) / dz + q * (Sp - Se) / vol_e
        dTp = kT * (tpa - Tp) / dz + q * (Te - Tp) / vol_p
        dSp = kS * (spa - Sp) / dz + q * (Se - Sp) / vol_p - m * Sp / vol_p
        return dTe, dTp, dSe, dSp

    half = 0.5 * dt
    sixth = dt / 6.0
    for k in range(n_steps):
        t = t0 + k * dt
        tg1 = _targets(t, fc, args.tau, sc)
        tg2 = _targets(t + half, fc, args.tau, sc)
        tg4 = _targets(t + dt, fc, args.tau, sc)
        y = out[k]
        Te, Tp, Se, Sp = y[:, 0], y[:, 1], y[:, 2], y[:, 3]
        a1 = tend(Te, Tp, Se, Sp, tg1)
        a2 = tend(
            Te + half * a1[0], Tp + half * a1[1], Se + half * a1[2], Sp + half * a1[3], tg2
        )
        a3 = tend(
            Te + half * a2[0], Tp + half * a2[1], Se + half * a2[2], Sp + half * a2[3], tg2
        )
        a4 = tend(Te + dt * a3[0], Tp + dt * a3[1], Se + dt * a3[2], Sp + dt * a3[3], tg4)
        out[k + 1, :, 0] = Te + sixth * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        out[k + 1, :, 1] = Tp + sixth * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        out[k + 1, :, 2] = Se + sixth * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
        out[k + 1, :, 3] = Sp + sixth * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
    return out
