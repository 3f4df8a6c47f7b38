# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled ensemble propagation kernel.

The arithmetic mirrors ``reference.py`` expression for expression; together
with -ffp-contract=off this keeps both backends bit-identical.
"""

import numpy as np

from libc.math cimport cos, fabs, sin, M_PI


cdef inline void _tend(double Te, double Tp, double Se, double Sp,
                       double tea, double tpa, double sea, double spa, double m,
                       double kTm, double kSm, double gm,
                       double dx, double dz, double vol_e, double vol_p,
                       double rho0, double T0, double S0, double aT, double aS,
                       double* dTe, double* dTp, double* dSe, double* dSp) noexcept nogil:
    cdef double rho_e = rho0 * (1.0 - aT * (Te - T0) + aS * (Se - S0))
    cdef double rho_p = rho0 * (1.0 - aT * (Tp - T0) + aS * (Sp - S0))
    cdef double psi = gm * dx * dz * (rho_p - rho_e) / rho0
    cdef double q = fabs(psi)
    dTe[0] = kTm * (tea - Te) / dz + q * (Tp - Te) / vol_e
    dSe[0] = kSm * (sea - Se) / dz + q * (Sp - Se) / vol_e
    dTp[0] = kTm * (tpa - Tp) / dz + q * (Te - Tp) / vol_p
    dSp[0] = kSm * (spa - Sp) / dz + q * (Se - Sp) / vol_p - m * Sp / vol_p


cdef inline void _targets(double t, double tau, double* fc,
                          int active, double onset, double we, double wp,
                          double year_s, double melt,
                          double* tea, double* tpa, double* sea, double* spa,
                          double* m) noexcept nogil:
    cdef double arg = 2.0 * M_PI * t / tau
    cdef double sn = sin(arg)
    cdef double cs = cos(arg)
    cdef double dt_yr
    tea[0] = fc[0] + fc[2] * sn + fc[1] * cs
    tpa[0] = fc[3] + fc[5] * sn + fc[4] * cs
    sea[0] = fc[6] + fc[8] * sn + fc[7] * cs
    spa[0] = fc[9] + fc[11] * sn + fc[10] * cs
    if active and t >= onset:
        dt_yr = (t - onset) / year_s
        tea[0] = tea[0] + we * dt_yr
        tpa[0] = tpa[0] + wp * dt_yr
        m[0] = melt
    else:
        m[0] = 0.0


def propagate_ensemble(double[:, ::1] states, double[::1] kT, double[::1] kS,
                       double[::1] gam, double t0, double dt, int n_steps, args):
    cdef Py_ssize_t M = states.shape[0]
    out_arr = np.empty((n_steps + 1, M, 4), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr

    cdef double dx = args.dx
    cdef double dz = args.dz
    cdef double rho0 = args.rho0
    cdef double T0 = args.T0
    cdef double S0 = args.S0
    cdef double aT = args.alphaT
    cdef double aS = args.alphaS
    cdef double vol_e = args.dx * args.dz * args.dy_e
    cdef double vol_p = args.dx * args.dz * args.dy_p
    cdef double tau = args.tau

    cdef double[12] fc
    flat = np.ascontiguousarray(args.forcing, dtype=np.float64).ravel()
    cdef Py_ssize_t i
    for i in range(12):
        fc[i] = flat[i]

    sc = args.scenario
    cdef int active = sc.active
    cdef double onset = sc.onset_t
    cdef double we = sc.warm_e_per_yr
    cdef double wp = sc.warm_p_per_yr
    cdef double year_s = sc.year_seconds
    cdef double melt = sc.melt

    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0

    cdef Py_ssize_t k, m
    cdef double t
    cdef double te1, tp1, se1, sp1, m1
    cdef double te2, tp2, se2, sp2, m2
    cdef double te4, tp4, se4, sp4, m4
    cdef double Te, Tp, Se, Sp, kTm, kSm, gm
    cdef double a1Te, a1Tp, a1Se, a1Sp
    cdef double a2Te, a2Tp, a2Se, a2Sp
    cdef double a3Te, a3Tp, a3Se, a3Sp
    cdef double a4Te, a4Tp, a4Se, a4Sp

    with nogil:
        for m in range(M):
            out[0, m, 0] = states[m, 0]
            out[0, m, 1] = states[m, 1]
            out[0, m, 2] = states[m, 2]
            out[0, m, 3] = states[m, 3]
        for k in range(n_steps):
            t = t0 + k * dt
            _targets(t, tau, &fc[0], active, onset, we, wp, year_s, melt,
                     &te1, &tp1, &se1, &sp1, &m1)
            _targets(t + half, tau, &fc[0], active, onset, we, wp, year_s, melt,
                     &te2, &tp2, &se2, &sp2, &m2)
            _targets(t + dt, tau, &fc[0], active, onset, we, wp, year_s, melt,
                     &te4, &tp4, &se4, &sp4, &m4)
            for m in range(M):
                Te = out[k, m, 0]
                Tp = out[k, m, 1]
                Se = out[k, m, 2]
                Sp = out[k, m, 3]
                kTm = kT[m]
                kSm = kS[m]
                gm = gam[m]
                _tend(Te, Tp, Se, Sp, te1, tp1, se1, sp1, m1,
                      kTm, kSm, gm, dx, dz, vol_e, vol_p, rho0, T0, S0, aT, aS,
                      &a1Te, &a1Tp, &a1Se, &a1Sp)
                _tend(Te + half * a1Te, Tp + half * a1Tp,
                      Se + half * a1Se, Sp + half * a1Sp,
                      te2, tp2, se2, sp2, m2,
                      kTm, kSm, gm, dx, dz, vol_e, vol_p, rho0, T0, S0, aT, aS,
                      &a2Te, &a2Tp, &a2Se, &a2Sp)
                _tend(Te + half * a2Te, Tp + half * a2Tp,
                      Se + half * a2Se, Sp + half * a2Sp,
                      te2, tp2, se2, sp2, m2,
                      kTm, kSm, gm, dx, dz, vol_e, vol_p, rho0, T0, S0, aT, aS,
                      &a3Te, &a3Tp, &a3Se, &a3Sp)
                _tend(Te + dt * a3Te, Tp + dt * a3Tp,
                      Se + dt * a3Se, Sp + dt * a3Sp,
                      te4, tp4, se4, sp4, m4,
                      kTm, kSm, gm, dx, dz, vol_e, vol_p, rho0, T0, S0, aT, aS,
                      &a4Te, &a4Tp, &a4Se, &a4Sp)
                out[k + 1, m, 0] = Te + sixth * (a1Te + 2.0 * a2Te + 2.0 * a3Te + a4Te)
                out[k + 1, m, 1] = Tp + sixth * (a1Tp + 2.0 * a2Tp + 2.0 * a3Tp + a4Tp)
                out[k + 1, m, 2] = Se + sixth * (a1Se + 2.0 * a2Se + 2.0 * a3Se + a4Se)
                out[k + 1, m, 3] = Sp + sixth * (a1Sp + 2.0 * a2Sp + 2.0 * a3Sp + a4Sp)
    return out_arr
