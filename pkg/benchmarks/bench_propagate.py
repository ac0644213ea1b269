"""Time the compiled and NumPy propagation backends on preset coughs.

    python benchmarks/bench_propagate.py [--env office] [--particles 1000] [--repeat 3]
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from aerochannel import engine, environment, propagate as prop
from aerochannel.emission import sample_cough_arrays


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", default="office")
    ap.add_argument("--particles", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    env = environment.builtin(args.env)
    emitter = env.emitters[0]
    em = env.emission_for(emitter)
    em = replace(em, particles_per_event=args.particles)
    cough = sample_cough_arrays(em, emitter.pose, np.random.default_rng(args.seed))
    cap = engine.time_cap(env, em, emitter.pose.mouth_position[2])
    room, receivers = env.room.extent, env.receiver_arrays()

    results = {}
    for backend in prop.available_backends():
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            out = prop.propagate(cough.positions, cough.velocities, cough.diameters, env.physics,
                                 cap, room, receivers, backend=backend)
            times.append(time.perf_counter() - t0)
        results[backend] = (min(times), out)
        print(f"{backend:>9}: {min(times):8.3f} s for {len(cough)} particles "
              f"({1e6 * min(times) / len(cough):.1f} us/particle)")

    if len(results) == 2:
        (tc, oc), (tp, op) = results["compiled"], results["python"]
        same = np.array_equal(oc[0], op[0]) and np.array_equal(oc[1], op[1])
        print(f"  speedup: {tp / tc:.1f}x; outputs bitwise identical: {same}")


if __name__ == "__main__":
    main()
