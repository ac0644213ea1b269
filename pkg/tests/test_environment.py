import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from aerochannel import environment as envmod
from aerochannel.emission import EmitterPose
from aerochannel.environment import (ConfigError, Emitter, EnvironmentSpec, RandomizedPosition,
                                     Receiver, RoomGeometry, Trajectory)
from aerochannel.kinematics import ParticleState, PhysicsConfig, trajectory

VACUUM = PhysicsConfig(g=0.0, viscosity=0.0)


def scene(receivers=(), physics=VACUUM, **kw):
    return EnvironmentSpec(room=RoomGeometry(4.0, 4.0, 3.0),
                           emitters=(Emitter("src", EmitterPose((0.5, 0.5, 1.5))),),
                           receivers=tuple(receivers), physics=physics, **kw)


def run(state, env, max_steps=100_000, cfg=None):
    cfg = cfg or env.physics
    t = 0.0
    for k in range(max_steps):
        state, event = envmod.advance_and_collide(state, env, t, cfg)
        t = (k + 1) * cfg.dt
        if event is not None:
            return state, event, k + 1
    return state, None, max_steps


def test_wall_absorbs_within_one_step():
    env = scene()
    s0 = ParticleState((3.99, 2.0, 1.5), (200.0, 0.0, 0.0), 1e-5)
    s, event, steps = run(s0, env)
    assert event.absorber == "wall" and steps == 1
    assert not s.alive
    assert s.position[0] == pytest.approx(4.0)
    assert event.diameter == 1e-5


def test_floor_absorbs_under_gravity():
    env = scene(physics=PhysicsConfig())
    _, event, _ = run(ParticleState((2.0, 2.0, 0.01), (0.0, 0.0, 0.0), 5e-4), env)
    assert event.absorber == "wall"


def test_segment_grazing_static_receiver():
    env = scene([Receiver("r", (2.0, 2.04, 1.5))])
    s, event, _ = run(ParticleState((1.0, 2.0, 1.5), (10.0, 0.0, 0.0), 1e-5), env)
    assert event.absorber == "r"
    # entry point on the sphere surface
    assert np.linalg.norm(np.subtract(s.position, (2.0, 2.04, 1.5))) == pytest.approx(0.05, abs=1e-9)


def test_receiver_missed_by_a_hair():
    env = scene([Receiver("r", (2.0, 2.0501, 1.5))])
    _, event, _ = run(ParticleState((1.0, 2.0, 1.5), (10.0, 0.0, 0.0), 1e-5), env)
    assert event.absorber == "wall"


def fine_oracle(state, env, cfg, t_end, sub=100):
    """First time the swept path is inside the receiver, sampled every dt/sub."""
    rec = env.receivers[0]
    n = int(math.ceil(t_end / cfg.dt))
    pos, _ = trajectory(state, cfg, n)
    s = np.arange(1, sub + 1) / sub
    pts = pos[:-1, None, :] + s[None, :, None] * (pos[1:] - pos[:-1])[:, None, :]
    times = (np.arange(n)[:, None] + s[None, :]) * cfg.dt
    tr = rec.trajectory
    moved = np.clip(times, tr.start_time, tr.stop_time) - tr.start_time
    centers = np.asarray(rec.center) + moved[..., None] * np.asarray(tr.velocity)
    inside = np.linalg.norm(pts - centers, axis=2) <= rec.radius
    if not inside.any():
        return None
    return float(times.ravel()[np.argmax(inside.ravel())])


def test_moving_receiver_hits_what_a_static_one_misses():
    moving = Receiver("walker", (1.5, 1.0, 1.5), trajectory=Trajectory((-1.0, 0.0, 0.0), 0.0, 1.0))
    static = Receiver("walker", (1.5, 1.0, 1.5))
    s0 = ParticleState((1.0, 0.5, 1.5), (0.0, 1.0, 0.0), 1e-5)
    cfg = PhysicsConfig(g=0.0, viscosity=0.0, dt=1e-3)
    _, ev_static, _ = run(s0, scene([static]), cfg=cfg)
    assert ev_static.absorber == "wall"
    _, ev, _ = run(s0, scene([moving]), cfg=cfg)
    assert ev.absorber == "walker"
    t_oracle = fine_oracle(s0, scene([moving]), cfg, 2.0)
    # the particle enters the sphere near t = 0.5 - 0.05 / sqrt(2)
    assert t_oracle == pytest.approx(0.5 - 0.05 / math.sqrt(2), abs=2e-5)
    assert abs(ev.time - t_oracle) <= cfg.dt / 100


def test_moving_receiver_with_drag_matches_fine_oracle():
    # receivers walk 0.4 m along -x onto the point each particle reaches at t = 0.4 s
    cfg = PhysicsConfig()
    rng = np.random.default_rng(3)
    for _ in range(4):
        d = float(rng.uniform(2e-5, 1e-3))
        v = rng.normal(size=3)
        s0 = ParticleState((3.0, 2.0, 1.64), tuple(4.0 * v / np.linalg.norm(v)), d)
        target = trajectory(s0, cfg, 4000)[0][-1]
        start = tuple(target + (0.4, 0.0, 0.0))
        walker = Receiver("walker", start, trajectory=Trajectory((-1.0, 0.0, 0.0), 0.0, 1.0))
        env = EnvironmentSpec(room=RoomGeometry(10.0, 4.0, 3.0), physics=cfg,
                              emitters=(Emitter("src", EmitterPose((3.0, 2.0, 1.64))),),
                              receivers=(walker,))
        _, ev, _ = run(s0, env, max_steps=5000)
        assert ev is not None and ev.absorber == "walker"
        t_oracle = fine_oracle(s0, env, cfg, 0.45)
        assert abs(ev.time - t_oracle) <= cfg.dt / 100
        still = replace(env, receivers=(Receiver("walker", start),))
        _, ev_static, _ = run(s0, still, max_steps=5000)
        assert ev_static is None or ev_static.absorber == "wall"


def test_receiver_stops_at_stop_time():
    r = Receiver("w", (5.0, 1.0, 1.6), trajectory=Trajectory((-1.0, 0.0, 0.0), 1.0, 3.0))
    np.testing.assert_allclose(r.position_at(0.5), (5.0, 1.0, 1.6))
    np.testing.assert_allclose(r.position_at(2.0), (4.0, 1.0, 1.6))
    np.testing.assert_allclose(r.position_at(10.0), (3.0, 1.0, 1.6))


def test_preset_values():
    office = envmod.builtin("office")
    assert office.n_events == 240 and office.event_interval == 60.0
    assert {e.pose.mouth_position[2] for e in office.emitters} == {1.2}
    assert [r.center[2] for r in office.receivers] == [1.2]
    assert envmod.builtin("bus").room.ceiling_height == 2.3
    corridor = envmod.builtin("corridor")
    assert corridor.receivers[0].trajectory.speed == 1.0
    assert corridor.n_events == 1
    start = np.subtract(corridor.receivers[0].center, corridor.emitters[0].pose.mouth_position)
    assert np.linalg.norm(start) == pytest.approx(1.0, abs=1e-6)
    assert corridor.emitters[0].pose.mouth_position[2] == 1.64
    classroom = envmod.builtin("classroom")
    assert classroom.n_events == 90 and len(classroom.emitters) == 2
    assert [rp.target for rp in classroom.randomized] == ["teacher"]
    bus = envmod.builtin("bus")
    assert bus.n_events == 1 and len(bus.emitters) == 1
    for name in ("office", "corridor", "classroom"):
        assert envmod.builtin(name).room.ceiling_height == 3.0


def test_bus_half_occupancy():
    bus = envmod.builtin("bus")
    seats_per_row = 4
    rows = len({r.center[0] for r in bus.receivers})
    assert len(bus.receivers) == rows * seats_per_row // 2


def test_unknown_preset():
    with pytest.raises(ValueError):
        envmod.builtin("airport")


def test_preset_files_match_builders():
    for name in envmod.BUILTIN_NAMES:
        path = envmod.preset_dir() / f"{name}.json"
        assert path.read_text() == envmod.dumps(envmod.build_preset(name))


def test_preset_dir_override(tmp_path, monkeypatch):
    doc = envmod.to_document(envmod.build_preset("office"))
    doc["n_events"] = 7
    (tmp_path / "office.json").write_text(json.dumps(doc))
    monkeypatch.setenv(envmod.PRESET_DIR_ENV, str(tmp_path))
    assert envmod.builtin("office").n_events == 7
    assert envmod.builtin("bus").room.ceiling_height == 2.3


def test_document_round_trip():
    for name in envmod.BUILTIN_NAMES:
        env = envmod.build_preset(name)
        again = envmod.from_document(json.loads(envmod.dumps(env)))
        assert again == env
        assert envmod.document_hash(again) == envmod.document_hash(env)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["receivers"][0].update(center=[9.0, 2.0, 1.2]), "receivers[0].center"),
    (lambda d: d.update(n_events=0), "n_events"),
    (lambda d: d["room"].update(x=-1.0), "room.x"),
    (lambda d: d["emitters"][0].update(mouth_position=[1.0, 2.0, 5.0]), "emitters[0].mouth_position"),
    (lambda d: d["physics"].update(dt=-1.0), "physics"),
    (lambda d: d.update(colour="red"), "<root>"),
])
def test_validation_names_the_field(mutate, field):
    doc = envmod.to_document(envmod.build_preset("office"))
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        envmod.from_document(doc)
    assert info.value.field == field


def test_randomization_without_elements_is_identity(rng):
    env = envmod.builtin("office")
    assert envmod.sample_randomized(env, rng) is env


def test_degenerate_region_is_deterministic(rng):
    env = scene(randomized=(RandomizedPosition("src", (1.0, 1.0), (2.0, 2.0)),))
    out = envmod.sample_randomized(env, rng)
    assert out.emitters[0].pose.mouth_position == (1.0, 2.0, 1.5)
    assert out.randomized == ()


def test_teacher_position_uniform(rng):
    env = envmod.builtin("classroom")
    xs = [envmod.sample_randomized(env, rng).emitters[0].pose.mouth_position[0] for _ in range(10_000)]
    assert stats.kstest(xs, stats.uniform(loc=0.6, scale=0.8).cdf).pvalue > 1e-3
