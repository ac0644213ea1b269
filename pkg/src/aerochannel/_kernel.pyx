# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled particle propagation.

Same contract and the same floating-point operation order as
``_propagate_py.propagate``; particles are advanced one at a time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, floor, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    WALL = -1
    CAPPED = -2
    NO_HIT = -3
    SETTLE_FIXED = 1
    SETTLE_FREE = 2

cdef double CULL_MARGIN = 1e-9


cdef long MAX_SKIP = 1 << 40


cdef inline long _steps(double x) nogil:
    if x >= MAX_SKIP:
        return MAX_SKIP
    return <long>floor(x)


cdef inline double _clip(double u, double lo, double hi) nogil:
    if u < lo:
        u = lo
    if u > hi:
        u = hi
    return u


cdef double _sphere_time(double* p0, double* p1, double ta, double tb,
                         const double[:, ::1] c0, const double[:, ::1] rv,
                         const double[::1] rs, const double[::1] re,
                         const double[::1] rr, Py_ssize_t j) nogil:
    cdef double cuts[4]
    cdef int ncut = 0, m, q
    cdef double span = tb - ta
    cdef double u0, u1, r2, a, b, c, disc, s
    cdef double pa[3]
    cdef double pb[3]
    cdef double ca[3]
    cdef double cb[3]
    cdef double d0[3]
    cdef double dd[3]
    cdef bint moving = rv[j, 0] != 0.0 or rv[j, 1] != 0.0 or rv[j, 2] != 0.0

    cuts[ncut] = ta
    ncut += 1
    if moving:
        if ta < rs[j] and rs[j] < tb:
            cuts[ncut] = rs[j]
            ncut += 1
        if ta < re[j] and re[j] < tb:
            cuts[ncut] = re[j]
            ncut += 1
    cuts[ncut] = tb
    ncut += 1

    r2 = rr[j] * rr[j]
    for m in range(ncut - 1):
        u0 = cuts[m]
        u1 = cuts[m + 1]
        for q in range(3):
            if u0 == ta:
                pa[q] = p0[q]
            else:
                pa[q] = p0[q] + ((u0 - ta) / span) * (p1[q] - p0[q])
            if u1 == tb:
                pb[q] = p1[q]
            else:
                pb[q] = p0[q] + ((u1 - ta) / span) * (p1[q] - p0[q])
            ca[q] = c0[j, q] + rv[j, q] * (_clip(u0, rs[j], re[j]) - rs[j])
            cb[q] = c0[j, q] + rv[j, q] * (_clip(u1, rs[j], re[j]) - rs[j])
            d0[q] = pa[q] - ca[q]
            dd[q] = (pb[q] - pa[q]) - (cb[q] - ca[q])
        c = d0[0] * d0[0] + d0[1] * d0[1] + d0[2] * d0[2] - r2
        if c <= 0.0:
            return u0
        b = d0[0] * dd[0] + d0[1] * dd[1] + d0[2] * dd[2]
        if b >= 0.0:
            continue
        a = dd[0] * dd[0] + dd[1] * dd[1] + dd[2] * dd[2]
        disc = b * b - a * c
        if disc < 0.0:
            continue
        s = (-b - sqrt(disc)) / a
        if s <= 1.0:
            return u0 + s * (u1 - u0)
    return INFINITY


cdef long _first_hit(double* p0, double* p1, double ta, double tb, const double[::1] room,
                     const double[:, ::1] c0, const double[:, ::1] rv,
                     const double[::1] rs, const double[::1] re,
                     const double[::1] rr, double* t_out,
                     long step, long* safe_until, double speed, double sink, double cap) nogil:
    # safe_until[j] > step: receiver j is provably out of reach during this step.
    # Over the coming steps |v| grows by at most `sink` per step and never
    # exceeds `cap` (infinite when there is no settled speed).
    cdef Py_ssize_t j, k
    cdef long best = NO_HIT, m_quad, m_lin
    cdef double best_t = INFINITY, t, s, tw = INFINITY, gap, cq, w, qa, qb
    cdef double dt = tb - ta
    cdef Py_ssize_t n_rec = rr.shape[0]
    cdef long soonest = 0
    # safe_until[n_rec] caches the earliest expiry over all receivers
    if safe_until != NULL:
        if step < safe_until[n_rec]:
            n_rec = 0
        else:
            soonest = 1 << 62
    for j in range(n_rec):
        if safe_until != NULL:
            if step < safe_until[j]:
                if safe_until[j] < soonest:
                    soonest = safe_until[j]
                continue
            gap = 0.0
            for k in range(3):
                cq = c0[j, k] + rv[j, k] * (_clip(ta, rs[j], re[j]) - rs[j]) - p0[k]
                gap = gap + cq * cq
            gap = (sqrt(gap) - rr[j] - CULL_MARGIN) * (1.0 - 1e-9)
            if gap > 0.0:
                w = sqrt(rv[j, 0] * rv[j, 0] + rv[j, 1] * rv[j, 1] + rv[j, 2] * rv[j, 2])
                # m steps cover at most m (speed + w) dt + sink dt m (m + 1) / 2
                qa = 0.5 * sink * dt
                qb = (speed + w) * dt + qa
                if qa > 0.0:
                    m_quad = _steps((-qb + sqrt(qb * qb + 4.0 * qa * gap)) / (2.0 * qa))
                else:
                    m_quad = _steps(gap / qb) if qb > 0.0 else MAX_SKIP
                m_lin = 0
                if cap < INFINITY:
                    m_lin = _steps(gap / ((cap + w) * dt)) if cap + w > 0.0 else MAX_SKIP
                if m_lin > m_quad:
                    m_quad = m_lin
                if m_quad >= 1:
                    safe_until[j] = step + m_quad
                    if safe_until[j] < soonest:
                        soonest = safe_until[j]
                    continue
            soonest = step
        t = _sphere_time(p0, p1, ta, tb, c0, rv, rs, re, rr, j)
        if t < best_t:
            best_t = t
            best = j
    if safe_until != NULL and n_rec > 0:
        safe_until[n_rec] = soonest
    for k in range(3):
        if p1[k] < 0.0:
            s = (0.0 - p0[k]) / (p1[k] - p0[k])
            t = ta + s * (tb - ta)
            if t < tw:
                tw = t
        if p1[k] > room[k]:
            s = (room[k] - p0[k]) / (p1[k] - p0[k])
            t = ta + s * (tb - ta)
            if t < tw:
                tw = t
    if tw < best_t:
        best_t = tw
        best = WALL
    t_out[0] = best_t
    return best


def propagate(pos, vel, decay, sink, settle, vz_star, long n_steps, double dt,
              double settle_tol, room, rec_c0, rec_v, rec_t0, rec_t1, rec_r):
    cdef const double[:, ::1] P = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const double[:, ::1] V = np.ascontiguousarray(vel, dtype=np.float64)
    cdef const double[::1] dec = np.ascontiguousarray(decay, dtype=np.float64)
    cdef const double[::1] snk = np.ascontiguousarray(sink, dtype=np.float64)
    cdef const long[::1] st = np.ascontiguousarray(settle, dtype=np.int_)
    cdef const double[::1] vzs = np.ascontiguousarray(vz_star, dtype=np.float64)
    cdef const double[::1] rm = np.ascontiguousarray(room, dtype=np.float64)
    cdef const double[:, ::1] c0 = np.ascontiguousarray(rec_c0, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] rv = np.ascontiguousarray(rec_v, dtype=np.float64).reshape(-1, 3)
    cdef const double[::1] rs = np.ascontiguousarray(rec_t0, dtype=np.float64)
    cdef const double[::1] re = np.ascontiguousarray(rec_t1, dtype=np.float64)
    cdef const double[::1] rr = np.ascontiguousarray(rec_r, dtype=np.float64)

    cdef Py_ssize_t n = P.shape[0], i
    cdef long k, code
    outcome_arr = np.full(n, CAPPED, dtype=np.int64)
    t_end_arr = np.full(n, n_steps * dt, dtype=np.float64)
    cdef cnp.int64_t[::1] outcome = outcome_arr
    cdef double[::1] t_end = t_end_arr
    cdef double p[3]
    cdef double pn[3]
    cdef double v[3]
    cdef double t_final = n_steps * dt
    cdef double ta, tb, d, dev, t_hit, span, cap
    cdef Py_ssize_t m = rr.shape[0], j
    cdef long* safe = <long*> malloc((m + 1) * sizeof(long))
    if safe == NULL:
        raise MemoryError()

    with nogil:
        for i in range(n):
            p[0] = P[i, 0]; p[1] = P[i, 1]; p[2] = P[i, 2]
            v[0] = V[i, 0]; v[1] = V[i, 1]; v[2] = V[i, 2]
            d = dec[i]
            for j in range(m + 1):
                safe[j] = 0
            # |v| <= |v_now| + |vz_star| while relaxing toward the settled velocity
            if st[i] == SETTLE_FIXED:
                cap = (sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + fabs(vzs[i])) * (1.0 + 1e-9)
            elif st[i] == SETTLE_FREE:
                cap = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * (1.0 + 1e-9)
            else:
                cap = INFINITY
            for k in range(n_steps):
                ta = k * dt
                tb = (k + 1) * dt
                if st[i] == SETTLE_FREE:
                    dev = 0.0
                elif st[i] == SETTLE_FIXED:
                    dev = fabs(v[0])
                    if fabs(v[1]) > dev:
                        dev = fabs(v[1])
                    if fabs(v[2] - vzs[i]) > dev:
                        dev = fabs(v[2] - vzs[i])
                else:
                    dev = INFINITY
                if st[i] == SETTLE_FREE or (st[i] == SETTLE_FIXED and dev <= settle_tol):
                    if st[i] == SETTLE_FIXED:
                        v[0] = 0.0
                        v[1] = 0.0
                        v[2] = vzs[i]
                    span = t_final - ta
                    pn[0] = p[0] + v[0] * span
                    pn[1] = p[1] + v[1] * span
                    pn[2] = p[2] + v[2] * span
                    code = _first_hit(p, pn, ta, t_final, rm, c0, rv, rs, re, rr, &t_hit, 0, NULL, 0.0, 0.0, 0.0)
                    if code != NO_HIT:
                        outcome[i] = code
                        t_end[i] = t_hit
                    break
                v[0] = v[0] * d
                v[1] = v[1] * d
                v[2] = v[2] * d - snk[i]
                pn[0] = p[0] + v[0] * dt
                pn[1] = p[1] + v[1] * dt
                pn[2] = p[2] + v[2] * dt
                code = _first_hit(p, pn, ta, tb, rm, c0, rv, rs, re, rr, &t_hit, k, safe, sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * (1.0 + 1e-9), snk[i], cap)
                if code != NO_HIT:
                    outcome[i] = code
                    t_end[i] = t_hit
                    break
                p[0] = pn[0]; p[1] = pn[1]; p[2] = pn[2]
    free(safe)
    return outcome_arr, t_end_arr
