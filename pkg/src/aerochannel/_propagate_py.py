"""Pure NumPy particle propagation (fallback for the compiled kernel).

Particles advance in lock step, vectorised over the live set.  The
floating-point operations mirror ``_kernel.pyx`` one for one so both
backends classify particles identically.

Outcome codes: ``>= 0`` receiver index, ``WALL`` room boundary, ``CAPPED``
still airborne at the time cap.
"""
from __future__ import annotations

import numpy as np

WALL = -1
CAPPED = -2

SETTLE_NEVER = 0
SETTLE_FIXED = 1   # relaxes to (0, 0, vz_star)
SETTLE_FREE = 2    # velocity never changes


def _receiver_pos(c0, rv, rs, re, u):
    return c0 + rv * (min(max(u, rs), re) - rs)


def _sphere_times(p0, p1, ta, tb, c0, rv, rs, re, radius):
    """Earliest time each segment p0->p1 over [ta, tb] touches one receiver sphere."""
    cuts = [ta]
    if rv[0] != 0.0 or rv[1] != 0.0 or rv[2] != 0.0:
        cuts += [u for u in (rs, re) if ta < u < tb]
    cuts.append(tb)

    out = np.full(p0.shape[0], np.inf)
    pending = np.ones(p0.shape[0], dtype=bool)
    r2 = radius * radius
    span = tb - ta
    for u0, u1 in zip(cuts[:-1], cuts[1:]):
        pa = p0 if u0 == ta else p0 + ((u0 - ta) / span) * (p1 - p0)
        pb = p1 if u1 == tb else p0 + ((u1 - ta) / span) * (p1 - p0)
        ca = _receiver_pos(c0, rv, rs, re, u0)
        cb = _receiver_pos(c0, rv, rs, re, u1)
        d0 = pa - ca
        dd = (pb - pa) - (cb - ca)
        c = d0[:, 0] * d0[:, 0] + d0[:, 1] * d0[:, 1] + d0[:, 2] * d0[:, 2] - r2
        b = d0[:, 0] * dd[:, 0] + d0[:, 1] * dd[:, 1] + d0[:, 2] * dd[:, 2]
        a = dd[:, 0] * dd[:, 0] + dd[:, 1] * dd[:, 1] + dd[:, 2] * dd[:, 2]

        inside = pending & (c <= 0.0)
        out[inside] = u0
        pending &= ~inside

        cand = pending & (b < 0.0)
        disc = b * b - a * c
        cand &= disc >= 0.0
        if np.any(cand):
            idx = np.flatnonzero(cand)
            s = (-b[idx] - np.sqrt(disc[idx])) / a[idx]
            ok = s <= 1.0
            hit = idx[ok]
            out[hit] = u0 + s[ok] * (u1 - u0)
            pending[hit] = False
        if not pending.any():
            break
    return out


def _wall_times(p0, p1, ta, tb, room):
    out = np.full(p0.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            lo = p1[:, k] < 0.0
            if lo.any():
                s = (0.0 - p0[lo, k]) / (p1[lo, k] - p0[lo, k])
                out[lo] = np.minimum(out[lo], ta + s * (tb - ta))
            hi = p1[:, k] > room[k]
            if hi.any():
                s = (room[k] - p0[hi, k]) / (p1[hi, k] - p0[hi, k])
                out[hi] = np.minimum(out[hi], ta + s * (tb - ta))
    return out


def first_hit(p0, p1, ta, tb, room, rec_c0, rec_v, rec_t0, rec_t1, rec_r):
    """Classify segments: returns (outcome code or -3 for no hit, hit time)."""
    n = p0.shape[0]
    best_t = np.full(n, np.inf)
    best = np.full(n, -3, dtype=np.int64)
    for j in range(rec_r.shape[0]):
        t = _sphere_times(p0, p1, ta, tb, rec_c0[j], rec_v[j], rec_t0[j], rec_t1[j], rec_r[j])
        better = t < best_t
        best_t[better] = t[better]
        best[better] = j
    tw = _wall_times(p0, p1, ta, tb, room)
    wall = tw < best_t
    best_t[wall] = tw[wall]
    best[wall] = WALL
    return best, best_t


def propagate(pos, vel, decay, sink, settle, vz_star, n_steps, dt, settle_tol,
              room, rec_c0, rec_v, rec_t0, rec_t1, rec_r):
    """Advance every particle until absorbed or ``n_steps`` steps have elapsed.

    Returns ``(outcome, t_end)`` arrays.
    """
    n = pos.shape[0]
    outcome = np.full(n, CAPPED, dtype=np.int64)
    t_end = np.full(n, n_steps * dt)
    live = np.arange(n)
    p = np.array(pos, dtype=float)
    v = np.array(vel, dtype=float)
    dec = np.asarray(decay, dtype=float)
    snk = np.asarray(sink, dtype=float)
    settle = np.asarray(settle)
    vz_star = np.asarray(vz_star, dtype=float)
    room = np.asarray(room, dtype=float)
    t_final = n_steps * dt

    for k in range(n_steps):
        if live.size == 0:
            break
        ta = k * dt
        tb = (k + 1) * dt

        st = settle[live]
        fixed = st == SETTLE_FIXED
        dev = np.maximum(np.maximum(np.abs(v[:, 0]), np.abs(v[:, 1])),
                         np.abs(v[:, 2] - vz_star[live]))
        done = (st == SETTLE_FREE) | (fixed & (dev <= settle_tol))
        if done.any():
            vf = v[done].copy()
            fx = fixed[done]
            vf[fx, 0] = 0.0
            vf[fx, 1] = 0.0
            vf[fx, 2] = vz_star[live[done]][fx]
            p0 = p[done]
            p1 = p0 + vf * (t_final - ta)
            code, t = first_hit(p0, p1, ta, t_final, room, rec_c0, rec_v, rec_t0, rec_t1, rec_r)
            ids = live[done]
            hit = code != -3
            outcome[ids[hit]] = code[hit]
            t_end[ids[hit]] = t[hit]
            keep = ~done
            live, p, v = live[keep], p[keep], v[keep]
            if live.size == 0:
                break

        d = dec[live]
        v[:, 0] = v[:, 0] * d
        v[:, 1] = v[:, 1] * d
        v[:, 2] = v[:, 2] * d - snk[live]
        p_new = p + v * dt
        code, t = first_hit(p, p_new, ta, tb, room, rec_c0, rec_v, rec_t0, rec_t1, rec_r)
        hit = code != -3
        if hit.any():
            outcome[live[hit]] = code[hit]
            t_end[live[hit]] = t[hit]
            keep = ~hit
            live, p_new, v = live[keep], p_new[keep], v[keep]
        p = p_new
    return outcome, t_end
