"""Discrete-time particle motion under gravity and Stokes drag.

Two integrators are available.  ``paper_euler`` is the explicit recursion
``v <- v - alpha v`` (minus ``g dt`` vertically) and is only stable for
``alpha < 1``, which fails for the smallest droplets at dt = 1e-4 s.
``exact_exponential`` uses the exact per-step decay ``exp(-alpha)`` with
relaxation toward the terminal velocity and is stable for every diameter.
Positions advance semi-implicitly, ``x <- x + v_new dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

PAPER_EULER = "paper_euler"
EXACT_EXPONENTIAL = "exact_exponential"
INTEGRATORS = (PAPER_EULER, EXACT_EXPONENTIAL)


class StabilityError(ValueError):
    """The explicit scheme was asked to run with a drag factor alpha >= 1."""


@dataclass(frozen=True)
class PhysicsConfig:
    dt: float = 1e-4
    g: float = 9.81
    viscosity: float = 1.85e-5
    water_density: float = 998.0
    integrator: str = EXACT_EXPONENTIAL

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        # g = 0 and viscosity = 0 are allowed for ballistic test scenes
        if not self.g >= 0:
            raise ValueError("g must be non-negative")
        if not self.viscosity >= 0:
            raise ValueError("viscosity must be non-negative")
        if not self.water_density > 0:
            raise ValueError("water_density must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "g": self.g, "viscosity": self.viscosity,
                "water_density": self.water_density, "integrator": self.integrator}

    @classmethod
    def from_dict(cls, doc: dict) -> "PhysicsConfig":
        known = {"dt", "g", "viscosity", "water_density", "integrator"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown physics fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class ParticleState:
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    diameter: float
    alive: bool = True


def particle_mass(d, cfg: PhysicsConfig):
    return cfg.water_density * (math.pi / 6.0) * np.asarray(d, dtype=float) ** 3


def stokes_beta(d, cfg: PhysicsConfig):
    """Stokes drag coefficient 3 pi eta d (kg/s)."""
    return 3.0 * math.pi * cfg.viscosity * np.asarray(d, dtype=float)


def drag_alpha(d, cfg: PhysicsConfig):
    """Per-step drag factor 18 eta dt / (rho d^2)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    alpha = 18.0 * cfg.viscosity * cfg.dt / (cfg.water_density * d**2)
    return float(alpha) if alpha.ndim == 0 else alpha


def terminal_velocity(d, cfg: PhysicsConfig):
    """Settling speed rho g d^2 / (18 eta) = m g / beta (m/s)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    if cfg.viscosity == 0:
        v = np.full_like(d, math.inf if cfg.g > 0 else 0.0)
    else:
        v = cfg.water_density * cfg.g * d**2 / (18.0 * cfg.viscosity)
    return float(v) if v.ndim == 0 else v


def fall_time(h: float, d, cfg: PhysicsConfig):
    """Time to settle from height ``h`` at terminal velocity; infinite without gravity."""
    if not h > 0:
        raise ValueError("height must be positive")
    v = np.asarray(terminal_velocity(d, cfg))
    with np.errstate(divide="ignore"):
        t = np.where(v > 0, h / np.where(v > 0, v, 1.0), math.inf)
    return float(t) if t.ndim == 0 else t


def is_memoryless(event_interval: float, h: float, d_quantile: float, cfg: PhysicsConfig) -> bool:
    """Events separated by more than the fall time of ``d_quantile`` particles do not overlap."""
    return event_interval > fall_time(h, d_quantile, cfg)


def step_coefficients(d, cfg: PhysicsConfig):
    """Per-step velocity map ``v_xy <- decay v_xy``, ``v_z <- decay v_z - sink``.

    Returns ``(decay, sink)`` arrays.  For ``paper_euler`` the decay is
    ``1 - alpha`` and the sink ``g dt``; for ``exact_exponential`` the decay is
    ``exp(-alpha)`` and the sink ``v_inf (1 - exp(-alpha))``.
    """
    d = np.asarray(d, dtype=float)
    alpha = np.atleast_1d(drag_alpha(d, cfg))
    g_dt = cfg.g * cfg.dt
    if cfg.integrator == PAPER_EULER:
        if np.any(alpha >= 1.0):
            bad = np.atleast_1d(d)[alpha >= 1.0].min()
            raise StabilityError(
                f"explicit drag update is unstable: alpha = {alpha.max():.4g} >= 1 "
                f"(d = {bad:.3g} m, dt = {cfg.dt:g} s); use the exact_exponential integrator "
                "or a smaller time step")
        decay = 1.0 - alpha
        sink = np.full_like(alpha, g_dt)
    else:
        decay = np.exp(-alpha)
        sink = np.empty_like(alpha)
        small = alpha == 0.0
        sink[small] = g_dt
        # v_inf (1 - e^-a) with v_inf = g dt / a
        sink[~small] = g_dt / alpha[~small] * -np.expm1(-alpha[~small])
    if d.ndim == 0:
        return float(decay[0]), float(sink[0])
    return decay, sink


def step(state: ParticleState, cfg: PhysicsConfig) -> ParticleState:
    """Advance one particle by one time step."""
    if not state.alive:
        raise ValueError("cannot step an absorbed particle")
    decay, sink = step_coefficients(state.diameter, cfg)
    vx, vy, vz = state.velocity
    if cfg.integrator == PAPER_EULER:
        alpha = drag_alpha(state.diameter, cfg)
        v_new = (vx - alpha * vx, vy - alpha * vy, vz - cfg.g * cfg.dt - alpha * vz)
    else:
        v_new = (vx * decay, vy * decay, vz * decay - sink)
    x, y, z = state.position
    p_new = (x + v_new[0] * cfg.dt, y + v_new[1] * cfg.dt, z + v_new[2] * cfg.dt)
    return replace(state, position=p_new, velocity=v_new)


def trajectory(state: ParticleState, cfg: PhysicsConfig, n_steps: int):
    """Positions and velocities over ``n_steps`` steps (no collisions), shape (n+1, 3)."""
    pos = np.empty((n_steps + 1, 3))
    vel = np.empty((n_steps + 1, 3))
    pos[0], vel[0] = state.position, state.velocity
    for k in range(n_steps):
        state = step(state, cfg)
        pos[k + 1], vel[k + 1] = state.position, state.velocity
    return pos, vel
