"""Stochastic cough events: particle count, diameters and emission directions.

Direction sampling composes two rotations.  A head rotation (azimuth,
elevation) drawn once per cough turns the facing vector; each particle then
deviates from the rotated axis by its own Gaussian beam angles.  Angles are
sampled per axis in angle space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .kinematics import ParticleState

D_MIN = 2e-6
D_MAX = 2e-3


def log_histogram(d_min: float = D_MIN, d_max: float = D_MAX, bins: int = 30,
                  weights=None) -> tuple[tuple[float, float, float], ...]:
    """Log-spaced diameter bins; equal weights unless given."""
    edges = np.geomspace(d_min, d_max, bins + 1)
    w = np.ones(bins) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    return tuple((float(edges[i]), float(edges[i + 1]), float(w[i])) for i in range(bins))


# Placeholder size distribution: 30 log-spaced bins over [2 um, 2 mm] with equal
# weight per bin.  The measured cough distribution is not reproduced here.
DEFAULT_HISTOGRAM = log_histogram()


@dataclass(frozen=True)
class EmissionConfig:
    particles_per_event: int = 4973
    initial_speed: float = 11.2
    beam_sigma_deg: float = 6.25
    head_sigma_h_deg: float = 30.0
    head_sigma_v_deg: float = 10.0
    head_mean_h_deg: float = 0.0
    head_mean_v_deg: float = 0.0
    diameter_distribution: tuple = DEFAULT_HISTOGRAM
    count_mode: str = "fixed"  # or "poisson"

    def __post_init__(self):
        if not self.particles_per_event > 0:
            raise ValueError("particles_per_event must be positive")
        if not self.initial_speed > 0:
            raise ValueError("initial_speed must be positive")
        for name in ("beam_sigma_deg", "head_sigma_h_deg", "head_sigma_v_deg"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.count_mode not in ("fixed", "poisson"):
            raise ValueError("count_mode must be 'fixed' or 'poisson'")
        hist = tuple(tuple(float(x) for x in row) for row in self.diameter_distribution)
        if not hist:
            raise ValueError("diameter histogram is empty")
        for row in hist:
            if len(row) != 3:
                raise ValueError("histogram rows must be [d_lo, d_hi, weight]")
            lo, hi, w = row
            if not (0 < lo <= hi) or w < 0:
                raise ValueError(f"invalid histogram row {row}")
        total = sum(r[2] for r in hist)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"histogram weights must sum to 1 (got {total})")
        object.__setattr__(self, "diameter_distribution", hist)
        object.__setattr__(self, "particles_per_event", int(self.particles_per_event))

    @property
    def bin_edges(self) -> tuple[np.ndarray, np.ndarray]:
        h = np.asarray(self.diameter_distribution)
        return h[:, 0], h[:, 1]

    @property
    def bin_weights(self) -> np.ndarray:
        return np.asarray(self.diameter_distribution)[:, 2]

    @property
    def n_bins(self) -> int:
        return len(self.diameter_distribution)

    def to_dict(self) -> dict:
        return {
            "particles_per_event": self.particles_per_event,
            "initial_speed": self.initial_speed,
            "beam_sigma_deg": self.beam_sigma_deg,
            "head_sigma_h_deg": self.head_sigma_h_deg,
            "head_sigma_v_deg": self.head_sigma_v_deg,
            "head_mean_h_deg": self.head_mean_h_deg,
            "head_mean_v_deg": self.head_mean_v_deg,
            "diameter_distribution": [list(r) for r in self.diameter_distribution],
            "count_mode": self.count_mode,
        }

    @classmethod
    def from_dict(cls, doc: dict, base: Optional["EmissionConfig"] = None) -> "EmissionConfig":
        """Build from a document; missing fields come from ``base`` (or defaults)."""
        names = set(cls.__dataclass_fields__)
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown emission fields: {sorted(unknown)}")
        doc = dict(doc)
        if "diameter_distribution" in doc:
            doc["diameter_distribution"] = tuple(tuple(r) for r in doc["diameter_distribution"])
        return replace(base, **doc) if base is not None else cls(**doc)


@dataclass(frozen=True)
class EmitterPose:
    mouth_position: tuple[float, float, float]
    facing: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        pos = tuple(float(x) for x in self.mouth_position)
        f = np.asarray(self.facing, dtype=float)
        norm = np.linalg.norm(f)
        if norm == 0:
            raise ValueError("facing vector must be non-zero")
        if not pos[2] > 0:
            raise ValueError("mouth height must be positive")
        object.__setattr__(self, "mouth_position", pos)
        object.__setattr__(self, "facing", tuple(float(x) for x in f / norm))


def _frame(azimuth: float, elevation: float) -> np.ndarray:
    """Rotation taking the local x axis to direction (azimuth, elevation)."""
    ca, sa = math.cos(azimuth), math.sin(azimuth)
    ce, se = math.cos(elevation), math.sin(elevation)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[ce, 0.0, -se], [0.0, 1.0, 0.0], [se, 0.0, ce]])
    return rz @ ry


def direction_angles(v) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth and elevation (radians) of direction vectors."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    norm = np.linalg.norm(v, axis=1)
    return np.arctan2(v[:, 1], v[:, 0]), np.arcsin(np.clip(v[:, 2] / norm, -1.0, 1.0))


def sample_head_rotation(cfg: EmissionConfig, rng: np.random.Generator) -> tuple[float, float]:
    """(horizontal, vertical) head angles in degrees for one cough."""
    h = cfg.head_mean_h_deg + cfg.head_sigma_h_deg * rng.standard_normal()
    v = cfg.head_mean_v_deg + cfg.head_sigma_v_deg * rng.standard_normal()
    return float(h), float(v)


def sample_diameter_bins(cfg: EmissionConfig, rng: np.random.Generator, size: int):
    """Bin indices and log-uniform diameters within the chosen bins."""
    weights = cfg.bin_weights
    lo, hi = cfg.bin_edges
    idx = rng.choice(weights.size, size=size, p=weights) if weights.size > 1 \
        else np.zeros(size, dtype=np.intp)
    u = rng.random(size)
    d = np.exp(np.log(lo[idx]) + u * (np.log(hi[idx]) - np.log(lo[idx])))
    # guard the endpoints against exp/log rounding
    d = np.clip(d, lo[idx], hi[idx])
    return idx.astype(np.int64), d


def sample_diameter(cfg: EmissionConfig, rng: np.random.Generator) -> float:
    return float(sample_diameter_bins(cfg, rng, 1)[1][0])


@dataclass
class CoughSample:
    positions: np.ndarray   # (N, 3)
    velocities: np.ndarray  # (N, 3)
    diameters: np.ndarray   # (N,)
    bins: np.ndarray        # (N,)
    head_rotation: tuple[float, float] = field(default=(0.0, 0.0))

    def __len__(self):
        return self.diameters.size


def sample_cough_arrays(cfg: EmissionConfig, pose: EmitterPose,
                        rng: np.random.Generator) -> CoughSample:
    """Array form of :func:`sample_cough`.

    Draw order is fixed (count, head rotation, diameters, beam angles) so a
    seed reproduces the cough exactly.
    """
    if cfg.count_mode == "poisson":
        n = int(rng.poisson(cfg.particles_per_event))
    else:
        n = cfg.particles_per_event
    head_h, head_v = sample_head_rotation(cfg, rng)
    bins, d = sample_diameter_bins(cfg, rng, n)
    beam = np.radians(cfg.beam_sigma_deg) * rng.standard_normal((n, 2))

    az0, el0 = direction_angles(pose.facing)
    frame = _frame(az0[0] + math.radians(head_h), el0[0] + math.radians(head_v))
    cb, sb = np.cos(beam[:, 1]), np.sin(beam[:, 1])
    local = np.column_stack([cb * np.cos(beam[:, 0]), cb * np.sin(beam[:, 0]), sb])
    directions = local @ frame.T
    velocities = cfg.initial_speed * directions
    positions = np.tile(np.asarray(pose.mouth_position), (n, 1))
    return CoughSample(positions, velocities, d, bins, (head_h, head_v))


def sample_cough(cfg: EmissionConfig, pose: EmitterPose,
                 rng: np.random.Generator) -> list[ParticleState]:
    s = sample_cough_arrays(cfg, pose, rng)
    return [ParticleState(tuple(s.positions[i]), tuple(s.velocities[i]), float(s.diameters[i]))
            for i in range(len(s))]
