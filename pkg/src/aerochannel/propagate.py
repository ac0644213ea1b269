"""Backend selection for bulk particle propagation.

The compiled kernel is used when it imports; otherwise the NumPy
implementation.  Set ``AEROCHANNEL_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _propagate_py
from ._propagate_py import CAPPED, SETTLE_FIXED, SETTLE_FREE, SETTLE_NEVER, WALL
from .kinematics import PhysicsConfig, step_coefficients

__all__ = ["BACKEND", "CAPPED", "WALL", "SETTLE_TOL", "propagate", "prepare", "get_backend"]

# Velocity deviation (m/s) below which a particle is treated as settled and its
# remaining straight path is resolved in one segment.
SETTLE_TOL = 1e-6

_BACKENDS = {"python": _propagate_py.propagate}
try:
    from . import _kernel
except ImportError:  # pragma: no cover - depends on the build
    _kernel = None
else:
    _BACKENDS["compiled"] = _kernel.propagate

_requested = os.environ.get("AEROCHANNEL_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"AEROCHANNEL_BACKEND must be 'python' or 'compiled', got {_requested!r}")
if _requested == "compiled" and _kernel is None:
    raise ImportError("AEROCHANNEL_BACKEND=compiled but the extension is not built")
BACKEND = _requested or ("compiled" if _kernel is not None else "python")


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def get_backend(name: str | None = None):
    return _BACKENDS[name or BACKEND]


def prepare(diameters, cfg: PhysicsConfig):
    """Per-particle step coefficients: (decay, sink, settle mode, settled vz)."""
    decay, sink = step_coefficients(np.atleast_1d(diameters), cfg)
    settle = np.full(decay.shape, SETTLE_NEVER, dtype=np.int64)
    vz_star = np.zeros_like(decay)
    relaxing = decay < 1.0
    settle[relaxing] = SETTLE_FIXED
    vz_star[relaxing] = -sink[relaxing] / (1.0 - decay[relaxing])
    settle[(decay == 1.0) & (sink == 0.0)] = SETTLE_FREE
    return decay, sink, settle, vz_star


def propagate(pos, vel, diameters, cfg: PhysicsConfig, t_max: float, room, receivers,
              backend: str | None = None, settle_tol: float = SETTLE_TOL):
    """Run particles to absorption or to ``t_max``.

    ``receivers`` is a tuple of arrays ``(centers, velocities, t_start, t_stop,
    radii)``.  Returns ``(outcome, t_end)``; see ``_propagate_py`` for codes.
    """
    decay, sink, settle, vz_star = prepare(diameters, cfg)
    n_steps = int(np.ceil(t_max / cfg.dt - 1e-9))
    c0, rv, rs, re, rr = (np.ascontiguousarray(a, dtype=float) for a in receivers)
    fn = get_backend(backend)
    return fn(np.ascontiguousarray(pos, dtype=float), np.ascontiguousarray(vel, dtype=float),
              decay, sink, settle, vz_star, n_steps, cfg.dt, settle_tol,
              np.asarray(room, dtype=float), c0.reshape(-1, 3), rv.reshape(-1, 3), rs, re, rr)
