"""Virion loading of particles and the absorbed-dose infection measure."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

ML_PER_M3 = 1e6

PROFILE_COLUMNS = ("d_lo", "d_hi", "p", "q", "N", "eta")


@dataclass(frozen=True)
class ViralLoad:
    concentration: float  # copies per mL of oral fluid

    def __post_init__(self):
        if not self.concentration >= 0:
            raise ValueError(f"viral load must be non-negative, got {self.concentration}")


@dataclass(frozen=True)
class InfectionThreshold:
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"infection threshold must be positive, got {self.theta}")


def _conc(load):
    if isinstance(load, ViralLoad):
        return load.concentration
    conc = np.asarray(load, dtype=float)
    if np.any(~(conc >= 0)):
        raise ValueError(f"viral load must be non-negative, got {load}")
    return conc


def expected_virions(d, load):
    """Mean virion count of a particle of diameter ``d`` (m): load times droplet volume.

    ``d`` and ``load`` broadcast against each other.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("diameter must be positive")
    lam = _conc(load) * (math.pi / 6.0) * d**3 * ML_PER_M3
    return float(lam) if lam.ndim == 0 else lam


def virion_probability(d, load):
    """Probability that a particle carries at least one virion (Poisson loading)."""
    lam = np.asarray(expected_virions(d, load))
    p = -np.expm1(-lam)
    return float(p) if p.ndim == 0 else p


def virions_given_infected(lam):
    """Mean virion count of a particle known to carry at least one virion.

    Equals lam / (1 - exp(-lam)); tends to 1 as lam -> 0.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.ones_like(lam)
    nz = lam > 0
    out[nz] = lam[nz] / -np.expm1(-lam[nz])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SizeClassProfile:
    """Per-diameter-class factors of the dose sum.

    ``p`` infection probability of a class particle, ``q`` its transition
    probability to the receiver, ``N`` particles emitted per event in the
    class, ``eta`` virions carried by an infected particle.
    """

    d_lo: np.ndarray
    d_hi: np.ndarray
    p: np.ndarray
    q: np.ndarray
    N: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in PROFILE_COLUMNS:
            a = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        sizes = {a.size for a in arrays.values()}
        if len(sizes) != 1:
            raise ValueError("profile columns must have equal length")
        for name, a in arrays.items():
            if np.any(a < 0) or np.any(np.isnan(a)):
                raise ValueError(f"profile column {name!r} must be non-negative")
        if np.any(arrays["p"] > 1) or np.any(arrays["q"] > 1):
            raise ValueError("p and q must lie in [0, 1]")

    def __len__(self):
        return self.p.size

    def to_rows(self) -> list[dict]:
        return [{name: float(getattr(self, name)[i]) for name in PROFILE_COLUMNS}
                for i in range(len(self))]

    @classmethod
    def from_rows(cls, rows) -> "SizeClassProfile":
        rows = list(rows)
        return cls(**{name: [float(r[name]) for r in rows] for name in PROFILE_COLUMNS})


def absorbed_dose(profile: SizeClassProfile, n: float) -> float:
    """Expected absorbed virions over ``n`` events: n * sum p q eta N."""
    if n < 0:
        raise ValueError("number of events must be non-negative")
    return float(n * np.sum(profile.p * profile.q * profile.eta * profile.N))


def is_infected(phi: float, theta) -> bool:
    theta = theta if isinstance(theta, InfectionThreshold) else InfectionThreshold(float(theta))
    return phi > theta.theta


def profile_for_load(d_lo, d_hi, weights, q, particles_per_event: float, load) -> SizeClassProfile:
    """Dose profile for a binned emission at a given viral load.

    Class diameters are the geometric bin centres; ``eta`` is the
    conditional virion count so that p * eta equals the mean load per particle.
    """
    d_lo = np.asarray(d_lo, dtype=float)
    d_hi = np.asarray(d_hi, dtype=float)
    d_mid = np.sqrt(d_lo * d_hi)
    lam = np.atleast_1d(expected_virions(d_mid, load))
    return SizeClassProfile(
        d_lo=d_lo, d_hi=d_hi,
        p=-np.expm1(-lam),
        q=q,
        N=particles_per_event * np.asarray(weights, dtype=float),
        eta=virions_given_infected(lam),
    )


def profile_to_json(profile: SizeClassProfile) -> str:
    return json.dumps(profile.to_rows(), indent=2)


def profile_from_json(text: str) -> SizeClassProfile:
    return SizeClassProfile.from_rows(json.loads(text))


def profile_to_csv(profile: SizeClassProfile) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=PROFILE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in profile.to_rows():
        writer.writerow({k: repr(v) for k, v in row.items()})
    return buf.getvalue()


def profile_from_csv(text: str) -> SizeClassProfile:
    return SizeClassProfile.from_rows(csv.DictReader(io.StringIO(text)))
