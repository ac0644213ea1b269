"""Room geometry, receivers, emitters and the builtin scenario presets.

Rooms are axis-aligned boxes ``[0, x] x [0, y] x [0, ceiling_height]``
whose faces absorb particles.  Receivers are 5 cm spheres around a mouth,
optionally moving at constant velocity for a time window.  Bodies are not
obstacles.

The preset layouts are plausible stand-ins for the scenario sketches; every
coordinate can be edited in an exported preset document.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import _propagate_py
from .emission import EmissionConfig, EmitterPose
from .kinematics import ParticleState, PhysicsConfig, step

BUILTIN_NAMES = ("office", "corridor", "classroom", "bus")
SITTING_MOUTH = 1.20
STANDING_MOUTH = 1.64
RECEIVER_RADIUS = 0.05
PRESET_DIR_ENV = "AEROCHANNEL_PRESET_DIR"


class ConfigError(ValueError):
    """Invalid environment document; the message names the offending field."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass(frozen=True)
class RoomGeometry:
    x: float
    y: float
    ceiling_height: float = 3.0

    def __post_init__(self):
        for name in ("x", "y", "ceiling_height"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"room.{name}", "must be positive")

    @property
    def extent(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.ceiling_height)

    def contains(self, p) -> bool:
        return all(0.0 <= c <= e for c, e in zip(p, self.extent))


@dataclass(frozen=True)
class Trajectory:
    velocity: tuple[float, float, float]
    start_time: float = 0.0
    stop_time: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        if self.stop_time < self.start_time:
            raise ValueError("trajectory stop_time precedes start_time")

    @property
    def speed(self) -> float:
        return math.sqrt(sum(v * v for v in self.velocity))


@dataclass(frozen=True)
class Receiver:
    id: str
    center: tuple[float, float, float]
    radius: float = RECEIVER_RADIUS
    trajectory: Optional[Trajectory] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError(f"receiver {self.id!r}: radius must be positive")

    def position_at(self, t: float) -> np.ndarray:
        c = np.asarray(self.center)
        tr = self.trajectory
        if tr is None:
            return c
        return c + np.asarray(tr.velocity) * (min(max(t, tr.start_time), tr.stop_time) - tr.start_time)


@dataclass(frozen=True)
class Emitter:
    id: str
    pose: EmitterPose
    emission: dict = field(default_factory=dict)  # overrides of the scene emission config


@dataclass(frozen=True)
class RandomizedPosition:
    """Uniform horizontal placement of an emitter or receiver over a rectangle."""
    target: str
    x_range: tuple[float, float]
    y_range: tuple[float, float]


@dataclass(frozen=True)
class EnvironmentSpec:
    room: RoomGeometry
    emitters: tuple[Emitter, ...]
    receivers: tuple[Receiver, ...]
    physics: PhysicsConfig = PhysicsConfig()
    emission: EmissionConfig = EmissionConfig()
    randomized: tuple[RandomizedPosition, ...] = ()
    n_events: int = 1
    event_interval: float = 60.0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "emitters", tuple(self.emitters))
        object.__setattr__(self, "receivers", tuple(self.receivers))
        object.__setattr__(self, "randomized", tuple(self.randomized))
        validate(self)

    def emission_for(self, emitter: Emitter) -> EmissionConfig:
        if not emitter.emission:
            return self.emission
        return EmissionConfig.from_dict(emitter.emission, base=self.emission)

    @property
    def receiver_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.receivers)

    def receiver_arrays(self):
        """Arrays ``(centers, velocities, t_start, t_stop, radii)`` for the propagators."""
        m = len(self.receivers)
        c0 = np.zeros((m, 3))
        rv = np.zeros((m, 3))
        rs = np.zeros(m)
        re = np.zeros(m)
        rr = np.zeros(m)
        for j, r in enumerate(self.receivers):
            c0[j] = r.center
            rr[j] = r.radius
            if r.trajectory is not None:
                rv[j] = r.trajectory.velocity
                rs[j] = r.trajectory.start_time
                re[j] = r.trajectory.stop_time
        return c0, rv, rs, re, rr


def validate(env: EnvironmentSpec) -> None:
    room = env.room
    if not env.emitters:
        raise ConfigError("emitters", "at least one emitter is required")
    if int(env.n_events) != env.n_events or env.n_events < 1:
        raise ConfigError("n_events", "must be a positive integer")
    if not env.event_interval > 0:
        raise ConfigError("event_interval_s", "must be positive")
    ids = [e.id for e in env.emitters] + [r.id for r in env.receivers]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ConfigError("ids", f"duplicate emitter/receiver ids {sorted(dup)}")
    for i, e in enumerate(env.emitters):
        if not room.contains(e.pose.mouth_position):
            raise ConfigError(f"emitters[{i}].mouth_position", "outside the room")
        try:
            env.emission_for(e)
        except ValueError as exc:
            raise ConfigError(f"emitters[{i}].emission", str(exc)) from None
    for j, r in enumerate(env.receivers):
        if not room.contains(r.center):
            raise ConfigError(f"receivers[{j}].center", "outside the room")
        tr = r.trajectory
        if tr is not None and tr.speed > 0:
            if math.isinf(tr.stop_time):
                raise ConfigError(f"receivers[{j}].trajectory.stop_time",
                                  "a moving receiver needs a finite stop_time")
            if not room.contains(r.position_at(tr.stop_time)):
                raise ConfigError(f"receivers[{j}].trajectory", "walks out of the room")
    for k, rp in enumerate(env.randomized):
        if rp.target not in ids:
            raise ConfigError(f"randomized[{k}].target", f"unknown id {rp.target!r}")
        (x0, x1), (y0, y1) = rp.x_range, rp.y_range
        if not (0 <= x0 <= x1 <= room.x and 0 <= y0 <= y1 <= room.y):
            raise ConfigError(f"randomized[{k}]", "region must lie inside the room")


# -- randomization ----------------------------------------------------------

def sample_randomized(env: EnvironmentSpec, rng: np.random.Generator) -> EnvironmentSpec:
    """Fix every randomized placement by a uniform draw; no draws if there are none."""
    if not env.randomized:
        return env
    emitters = {e.id: e for e in env.emitters}
    receivers = {r.id: r for r in env.receivers}
    for rp in env.randomized:
        x = rng.uniform(*rp.x_range) if rp.x_range[1] > rp.x_range[0] else rp.x_range[0]
        y = rng.uniform(*rp.y_range) if rp.y_range[1] > rp.y_range[0] else rp.y_range[0]
        if rp.target in emitters:
            e = emitters[rp.target]
            z = e.pose.mouth_position[2]
            emitters[rp.target] = replace(e, pose=EmitterPose((x, y, z), e.pose.facing))
        else:
            r = receivers[rp.target]
            receivers[rp.target] = replace(r, center=(x, y, r.center[2]))
    return replace(env, emitters=tuple(emitters[e.id] for e in env.emitters),
                   receivers=tuple(receivers[r.id] for r in env.receivers), randomized=())


# -- single-particle stepping ------------------------------------------------

@dataclass(frozen=True)
class AbsorptionEvent:
    absorber: str          # receiver id or "wall"
    time: float
    diameter: float


def advance_and_collide(state: ParticleState, env: EnvironmentSpec, t: float,
                        cfg: Optional[PhysicsConfig] = None):
    """Step one particle from time ``t`` and test the swept segment for absorption."""
    cfg = cfg or env.physics
    new = step(state, cfg)
    p0 = np.asarray(state.position, dtype=float)[None, :]
    p1 = np.asarray(new.position, dtype=float)[None, :]
    code, t_hit = _propagate_py.first_hit(p0, p1, t, t + cfg.dt, np.asarray(env.room.extent),
                                          *env.receiver_arrays())
    code, t_hit = int(code[0]), float(t_hit[0])
    if code == -3:
        return new, None
    s = (t_hit - t) / cfg.dt
    where = tuple(float(a) for a in p0[0] + s * (p1[0] - p0[0]))
    absorber = "wall" if code == _propagate_py.WALL else env.receivers[code].id
    dead = replace(new, position=where, alive=False)
    return dead, AbsorptionEvent(absorber, t_hit, state.diameter)


# -- documents ---------------------------------------------------------------

def to_document(env: EnvironmentSpec) -> dict:
    def receiver_doc(r: Receiver) -> dict:
        doc = {"id": r.id, "center": list(r.center), "radius": r.radius}
        if r.trajectory is not None:
            doc["trajectory"] = {"velocity": list(r.trajectory.velocity),
                                 "start_time": r.trajectory.start_time}
            if math.isfinite(r.trajectory.stop_time):
                doc["trajectory"]["stop_time"] = r.trajectory.stop_time
        return doc

    return {
        "name": env.name,
        "room": {"x": env.room.x, "y": env.room.y, "ceiling_height": env.room.ceiling_height},
        "physics": env.physics.to_dict(),
        "emission": env.emission.to_dict(),
        "emitters": [{"id": e.id, "mouth_position": list(e.pose.mouth_position),
                      "facing": list(e.pose.facing),
                      **({"emission": dict(e.emission)} if e.emission else {})}
                     for e in env.emitters],
        "receivers": [receiver_doc(r) for r in env.receivers],
        "randomized": [{"target": rp.target, "x_range": list(rp.x_range),
                        "y_range": list(rp.y_range)} for rp in env.randomized],
        "n_events": env.n_events,
        "event_interval_s": env.event_interval,
    }


_TOP_FIELDS = {"name", "room", "physics", "emission", "emitters", "receivers",
               "randomized", "n_events", "event_interval_s"}


def _wrap(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(path, str(exc)) from None


def from_document(doc: dict) -> EnvironmentSpec:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "environment document must be an object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ConfigError("<root>", f"unknown fields {sorted(unknown)}")
    for required in ("room", "emitters"):
        if required not in doc:
            raise ConfigError(required, "missing")
    room = _wrap("room", lambda d: RoomGeometry(**d), doc["room"])
    physics = _wrap("physics", PhysicsConfig.from_dict, doc.get("physics", {}))
    emission = _wrap("emission", EmissionConfig.from_dict, doc.get("emission", {}))
    emitters = []
    for i, e in enumerate(doc["emitters"]):
        pose = _wrap(f"emitters[{i}]", EmitterPose, tuple(e["mouth_position"]),
                     tuple(e.get("facing", (1.0, 0.0, 0.0))))
        emitters.append(Emitter(str(e.get("id", f"emitter{i}")), pose, dict(e.get("emission", {}))))
    receivers = []
    for j, r in enumerate(doc.get("receivers", [])):
        tr = None
        if r.get("trajectory"):
            tr = _wrap(f"receivers[{j}].trajectory", lambda d: Trajectory(
                tuple(d["velocity"]), float(d.get("start_time", 0.0)),
                float(d.get("stop_time", math.inf))), r["trajectory"])
        receivers.append(_wrap(f"receivers[{j}]", Receiver, str(r.get("id", f"receiver{j}")),
                               tuple(r["center"]), float(r.get("radius", RECEIVER_RADIUS)), tr))
    randomized = [
        _wrap(f"randomized[{k}]", RandomizedPosition, str(rp["target"]),
              tuple(rp["x_range"]), tuple(rp["y_range"]))
        for k, rp in enumerate(doc.get("randomized", []))
    ]
    return EnvironmentSpec(
        room=room, emitters=tuple(emitters), receivers=tuple(receivers), physics=physics,
        emission=emission, randomized=tuple(randomized),
        n_events=doc.get("n_events", 1), event_interval=float(doc.get("event_interval_s", 60.0)),
        name=str(doc.get("name", "custom")),
    )


def dumps(env: EnvironmentSpec) -> str:
    return json.dumps(to_document(env), indent=2) + "\n"


def load(path) -> EnvironmentSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"not valid JSON ({exc})") from None
    return from_document(doc)


def document_hash(env: EnvironmentSpec) -> str:
    text = json.dumps(to_document(env), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# -- builtin presets ---------------------------------------------------------

def _office() -> EnvironmentSpec:
    # two desks face to face, 1.5 m mouth to mouth
    return EnvironmentSpec(
        name="office",
        room=RoomGeometry(4.0, 4.0, 3.0),
        emitters=(Emitter("infected", EmitterPose((1.25, 2.0, SITTING_MOUTH), (1.0, 0.0, 0.0))),),
        receivers=(Receiver("colleague", (2.75, 2.0, SITTING_MOUTH)),),
        n_events=240, event_interval=60.0,
    )


def _corridor() -> EnvironmentSpec:
    # emitter walks along +x in one lane; the passer-by walks the other lane
    # toward -x and starts 1 m away.  Head turned a fixed 45 deg toward the lane.
    ex, ey = 4.0, 0.7
    lane_offset = 0.5
    start_x = ex + math.sqrt(1.0 - lane_offset**2)
    head = {"head_mean_h_deg": 45.0, "head_sigma_h_deg": 0.0,
            "head_mean_v_deg": 0.0, "head_sigma_v_deg": 0.0}
    return EnvironmentSpec(
        name="corridor",
        room=RoomGeometry(10.0, 2.0, 3.0),
        emitters=(Emitter("infected", EmitterPose((ex, ey, STANDING_MOUTH), (1.0, 0.0, 0.0)), head),),
        receivers=(Receiver("passerby", (round(start_x, 6), ey + lane_offset, STANDING_MOUTH),
                            trajectory=Trajectory((-1.0, 0.0, 0.0), 0.0, 4.0)),),
        n_events=1, event_interval=60.0,
    )


def _classroom() -> EnvironmentSpec:
    # 5 rows x 4 columns of desks at 1.2 m pitch facing the board at x = 0;
    # one student (row 3, column 2) and the teacher are infected
    rows = [2.5 + 1.2 * i for i in range(5)]
    cols = [1.7 + 1.2 * j for j in range(4)]
    infected = (2, 1)
    students = []
    emitters = [Emitter("teacher", EmitterPose((1.0, 3.5, STANDING_MOUTH), (1.0, 0.0, 0.0)))]
    for i, x in enumerate(rows):
        for j, y in enumerate(cols):
            sid = f"student_r{i + 1}c{j + 1}"
            pos = (round(x, 6), round(y, 6), SITTING_MOUTH)
            if (i, j) == infected:
                emitters.append(Emitter(sid, EmitterPose(pos, (-1.0, 0.0, 0.0))))
            else:
                students.append(Receiver(sid, pos))
    return EnvironmentSpec(
        name="classroom",
        room=RoomGeometry(8.0, 7.0, 3.0),
        emitters=tuple(emitters),
        receivers=tuple(students),
        randomized=(RandomizedPosition("teacher", (0.6, 1.4), (1.5, 5.5)),),
        n_events=90, event_interval=60.0,
    )


def _bus() -> EnvironmentSpec:
    # 2+2 seating, 11 rows at 0.8 m pitch; window seats taken (50 % occupancy);
    # the infected passenger stands in the aisle
    passengers = []
    for i in range(11):
        x = round(1.0 + 0.8 * i, 6)
        for side, y in (("L", 0.35), ("R", 2.15)):
            passengers.append(Receiver(f"seat{i + 1}{side}", (x, y, SITTING_MOUTH)))
    return EnvironmentSpec(
        name="bus",
        room=RoomGeometry(10.0, 2.5, 2.3),
        emitters=(Emitter("infected", EmitterPose((5.0, 1.25, STANDING_MOUTH), (1.0, 0.0, 0.0))),),
        receivers=tuple(passengers),
        n_events=1, event_interval=60.0,
    )


_BUILDERS = {"office": _office, "corridor": _corridor, "classroom": _classroom, "bus": _bus}


def preset_dir() -> Path:
    override = os.environ.get(PRESET_DIR_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("aerochannel") / "presets"))


def build_preset(name: str) -> EnvironmentSpec:
    """Construct a preset from code, ignoring any preset files."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    return _BUILDERS[name]()


def builtin(name: str) -> EnvironmentSpec:
    """Load a named preset from the preset directory, falling back to the coded layout."""
    if name not in _BUILDERS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    path = preset_dir() / f"{name}.json"
    if path.is_file():
        return load(path)
    return build_preset(name)


def resolve(env_arg: str) -> EnvironmentSpec:
    """A builtin name or a path to an environment document."""
    if env_arg in BUILTIN_NAMES:
        return builtin(env_arg)
    return load(env_arg)
