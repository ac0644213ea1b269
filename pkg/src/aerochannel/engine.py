"""Seeded Monte Carlo trials, transition estimates and infection-rate curves.

A trial simulates ``n_events`` coughs per emitter.  Coughs are treated as
independent channel uses: each one starts at t = 0 in an empty room and its
particles are retired (absorbed or capped) before the next cough.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dose, kinematics
from .emission import EmissionConfig, sample_cough_arrays
from .environment import EnvironmentSpec, sample_randomized
from .propagate import CAPPED, WALL, propagate

log = logging.getLogger(__name__)

MAX_TIME_CEILING = 600.0
CAP_FALL_TIMES = 10.0

TRANSITION_COLUMNS = ("receiver_id", "d_lo", "d_hi", "emitted", "hits", "q_hat", "stderr")
RATE_COLUMNS = ("load", "R_bits", "linear_measure", "phi", "n", "nR", "nPhi")


@dataclass
class TrialResult:
    receiver_ids: tuple[str, ...]
    d_lo: np.ndarray
    d_hi: np.ndarray
    hits_by_bin: np.ndarray      # (receivers, bins)
    emitted_by_bin: np.ndarray   # (bins,)
    wall_absorbed_by_bin: np.ndarray
    capped_by_bin: np.ndarray
    trial_seed: int

    @property
    def flagged(self) -> bool:
        """Some particles were still airborne at the time cap."""
        return bool(self.capped_by_bin.sum() > 0)

    def __eq__(self, other):
        if not isinstance(other, TrialResult):
            return NotImplemented
        return (self.receiver_ids == other.receiver_ids and self.trial_seed == other.trial_seed
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("d_lo", "d_hi", "hits_by_bin", "emitted_by_bin",
                                  "wall_absorbed_by_bin", "capped_by_bin")))


@dataclass
class TransitionEstimate:
    receiver_ids: tuple[str, ...]
    d_lo: np.ndarray
    d_hi: np.ndarray
    hits: np.ndarray       # (receivers, bins)
    emitted: np.ndarray    # (bins,)
    wall: np.ndarray
    capped: np.ndarray
    runs: int
    trials: list = field(default_factory=list, repr=False)

    @property
    def q_hat(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            q = self.hits / self.emitted[None, :]
        return np.where(self.emitted[None, :] > 0, q, 0.0)

    @property
    def stderr(self) -> np.ndarray:
        q = self.q_hat
        with np.errstate(invalid="ignore", divide="ignore"):
            se = np.sqrt(q * (1.0 - q) / self.emitted[None, :])
        return np.where(self.emitted[None, :] > 0, se, 0.0)

    def receiver_index(self, receiver: str) -> int:
        try:
            return self.receiver_ids.index(receiver)
        except ValueError:
            raise KeyError(f"no receiver {receiver!r} in estimate "
                           f"(have {', '.join(self.receiver_ids)})") from None

    def total_q(self, receiver: str) -> float:
        """Hit fraction over all bins."""
        j = self.receiver_index(receiver)
        return float(self.hits[j].sum() / self.emitted.sum())


# -- seeds -------------------------------------------------------------------

def trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit seed of trial ``trial_index``; independent of how many trials run."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def time_cap(env: EnvironmentSpec, emission: EmissionConfig, mouth_height: float) -> float:
    """Simulated-time budget for one cough.

    Ten fall times of the median diameter of the smallest bin, at most 600 s.
    """
    lo, hi = emission.bin_edges
    first = int(np.argmin(lo))
    d_med = math.sqrt(lo[first] * hi[first])
    v = kinematics.terminal_velocity(d_med, env.physics)
    if v == 0 or math.isinf(v):
        return MAX_TIME_CEILING
    return min(CAP_FALL_TIMES * mouth_height / v, MAX_TIME_CEILING)


def mass_median_diameter(emission: EmissionConfig) -> float:
    """Diameter splitting the emitted water mass in half (bins treated log-uniform)."""
    lo, hi = emission.bin_edges
    w = emission.bin_weights
    # mean of d^3 for log-uniform d in [lo, hi]
    with np.errstate(divide="ignore", invalid="ignore"):
        m3 = np.where(hi > lo, (hi**3 - lo**3) / (3.0 * np.log(hi / lo)), lo**3)
    mass = w * m3
    cum = np.cumsum(mass) / mass.sum()
    k = int(np.searchsorted(cum, 0.5))
    return float(math.sqrt(lo[k] * hi[k]))


def check_memoryless(env: EnvironmentSpec) -> bool:
    ok = True
    for e in env.emitters:
        em = env.emission_for(e)
        d = mass_median_diameter(em)
        if not kinematics.is_memoryless(env.event_interval, e.pose.mouth_position[2], d, env.physics):
            ok = False
            log.warning("events of emitter %r are %.3g s apart, less than the fall time of "
                        "the mass-median diameter %.3g m; the memoryless assumption is violated",
                        e.id, env.event_interval, d)
    return ok


def _bins_of(env: EnvironmentSpec):
    first = env.emission_for(env.emitters[0])
    for e in env.emitters[1:]:
        if env.emission_for(e).diameter_distribution != first.diameter_distribution:
            raise ValueError("all emitters must share one diameter histogram")
    lo, hi = first.bin_edges
    return lo.copy(), hi.copy()


def run_trial(env: EnvironmentSpec, seed: int, backend: Optional[str] = None) -> TrialResult:
    """One Monte Carlo trial, fully determined by ``seed``."""
    rng = np.random.default_rng(int(seed))
    concrete = sample_randomized(env, rng)
    d_lo, d_hi = _bins_of(concrete)
    n_bins, n_rec = d_lo.size, len(concrete.receivers)
    hits = np.zeros((n_rec, n_bins), dtype=np.int64)
    emitted = np.zeros(n_bins, dtype=np.int64)
    wall = np.zeros(n_bins, dtype=np.int64)
    capped = np.zeros(n_bins, dtype=np.int64)
    receivers = concrete.receiver_arrays()
    room = np.asarray(concrete.room.extent)

    configs = [(e, concrete.emission_for(e)) for e in concrete.emitters]
    caps = [time_cap(concrete, em, e.pose.mouth_position[2]) for e, em in configs]
    for _ in range(concrete.n_events):
        for (emitter, em), cap in zip(configs, caps):
            cough = sample_cough_arrays(em, emitter.pose, rng)
            outcome, _ = propagate(cough.positions, cough.velocities, cough.diameters,
                                   concrete.physics, cap, room, receivers, backend=backend)
            emitted += np.bincount(cough.bins, minlength=n_bins)
            for j in range(n_rec):
                hits[j] += np.bincount(cough.bins[outcome == j], minlength=n_bins)
            wall += np.bincount(cough.bins[outcome == WALL], minlength=n_bins)
            capped += np.bincount(cough.bins[outcome == CAPPED], minlength=n_bins)
    return TrialResult(concrete.receiver_ids, d_lo, d_hi, hits, emitted, wall, capped, int(seed))


def _run_indexed(args):
    env, seed, backend = args
    return run_trial(env, seed, backend)


def estimate_transitions(env: EnvironmentSpec, runs: int, master_seed: int,
                         workers: int = 1, backend: Optional[str] = None,
                         keep_trials: bool = True) -> TransitionEstimate:
    """Aggregate ``runs`` independent trials into per-bin hit fractions."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    check_memoryless(env)
    seeds = [trial_seed(master_seed, i) for i in range(runs)]
    jobs = [(env, s, backend) for s in seeds]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_run_indexed, jobs))
    else:
        trials = [_run_indexed(job) for job in jobs]

    first = trials[0]
    hits = sum(t.hits_by_bin for t in trials)
    emitted = sum(t.emitted_by_bin for t in trials)
    wall = sum(t.wall_absorbed_by_bin for t in trials)
    capped = sum(t.capped_by_bin for t in trials)
    flagged = sum(t.flagged for t in trials)
    if flagged:
        log.info("%d of %d trials reached the time cap with airborne particles", flagged, runs)
    return TransitionEstimate(first.receiver_ids, first.d_lo, first.d_hi, hits, emitted,
                              wall, capped, runs, trials if keep_trials else [])


# -- rate curves ---------------------------------------------------------------

@dataclass
class RateCurve:
    receiver: str
    loads: np.ndarray
    R_bits: np.ndarray
    linear_measure: np.ndarray
    phi: np.ndarray          # absorbed virions per event
    n: int

    @property
    def nR(self) -> np.ndarray:
        return self.n * self.R_bits

    @property
    def nPhi(self) -> np.ndarray:
        return self.n * self.phi

    def rows(self) -> list[tuple]:
        return [(float(self.loads[i]), float(self.R_bits[i]), float(self.linear_measure[i]),
                 float(self.phi[i]), self.n, float(self.nR[i]), float(self.nPhi[i]))
                for i in range(self.loads.size)]


def _neg_plog2p(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = -p[nz] * np.log2(p[nz])
    return out


def rate_curve(est: TransitionEstimate, receiver: str, loads: Sequence[float],
               emission: EmissionConfig, n: int) -> RateCurve:
    """Logarithmic rate, linear measure and dose versus viral load for one receiver.

    Per size bin the input probability is (bin weight) x P(particle carries a
    virion), evaluated at the geometric bin centre.
    """
    loads = np.asarray(loads, dtype=float)
    if np.any(loads < 0) or np.any(np.isnan(loads)):
        raise ValueError("viral loads must be non-negative")
    if n < 0:
        raise ValueError("number of events must be non-negative")
    j = est.receiver_index(receiver)
    e_lo, e_hi = emission.bin_edges
    if e_lo.size != est.d_lo.size or not (np.allclose(e_lo, est.d_lo, rtol=1e-9)
                                          and np.allclose(e_hi, est.d_hi, rtol=1e-9)):
        raise ValueError("emission histogram bins do not match the estimate's bins")
    weights = emission.bin_weights
    q = est.q_hat[j]

    R = np.empty(loads.size)
    lin = np.empty(loads.size)
    phi = np.empty(loads.size)
    for i, load in enumerate(loads):
        prof = dose.profile_for_load(est.d_lo, est.d_hi, weights, q,
                                     emission.particles_per_event, load)
        p = weights * prof.p
        R[i] = float(np.sum(q * _neg_plog2p(p)))
        lin[i] = float(np.sum(p * q))
        phi[i] = dose.absorbed_dose(prof, 1)
    return RateCurve(receiver, loads, R, lin, phi, int(n))


# -- CSV -----------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def transitions_csv(est: TransitionEstimate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSITION_COLUMNS)
    q, se = est.q_hat, est.stderr
    for j, rid in enumerate(est.receiver_ids):
        for b in range(est.d_lo.size):
            w.writerow([rid, _fmt(est.d_lo[b]), _fmt(est.d_hi[b]), int(est.emitted[b]),
                        int(est.hits[j, b]), _fmt(q[j, b]), _fmt(se[j, b])])
    return buf.getvalue()


def read_transitions_csv(text: str, runs: int = 1) -> TransitionEstimate:
    """Rebuild an estimate from a transitions CSV (hit and emission counts only)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("transitions CSV has no rows")
    missing = set(TRANSITION_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"transitions CSV lacks columns {sorted(missing)}")
    ids = list(dict.fromkeys(r["receiver_id"] for r in rows))
    bins = list(dict.fromkeys((float(r["d_lo"]), float(r["d_hi"])) for r in rows))
    hits = np.zeros((len(ids), len(bins)), dtype=np.int64)
    emitted = np.zeros(len(bins), dtype=np.int64)
    for r in rows:
        j = ids.index(r["receiver_id"])
        b = bins.index((float(r["d_lo"]), float(r["d_hi"])))
        hits[j, b] = int(r["hits"])
        emitted[b] = int(r["emitted"])
    d_lo = np.array([b[0] for b in bins])
    d_hi = np.array([b[1] for b in bins])
    zeros = np.zeros(len(bins), dtype=np.int64)
    return TransitionEstimate(tuple(ids), d_lo, d_hi, hits, emitted, zeros, zeros.copy(), runs)


def trials_csv(est: TransitionEstimate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial_index", "trial_seed", "emitted", "wall", "capped", "flagged",
                *[f"hits_{rid}" for rid in est.receiver_ids]])
    for i, t in enumerate(est.trials):
        w.writerow([i, t.trial_seed, int(t.emitted_by_bin.sum()), int(t.wall_absorbed_by_bin.sum()),
                    int(t.capped_by_bin.sum()), int(t.flagged),
                    *[int(h) for h in t.hits_by_bin.sum(axis=1)]])
    return buf.getvalue()


def rate_curve_csv(curve: RateCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_COLUMNS)
    for row in curve.rows():
        w.writerow([_fmt(row[0]), _fmt(row[1]), _fmt(row[2]), _fmt(row[3]), row[4],
                    _fmt(row[5]), _fmt(row[6])])
    return buf.getvalue()


def rate_curve_plotdata(curve: RateCurve) -> str:
    """Whitespace-separated columns for gnuplot, same order as the CSV."""
    lines = [f"# receiver {curve.receiver}", "# " + " ".join(RATE_COLUMNS)]
    for row in curve.rows():
        lines.append(" ".join(f"{v:.10g}" for v in row))
    return "\n".join(lines) + "\n"
