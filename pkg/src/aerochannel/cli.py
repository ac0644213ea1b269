"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, closed_forms as cf, dmc, dose, engine, environment
from .emission import EmissionConfig
from .environment import BUILTIN_NAMES, ConfigError
from .propagate import BACKEND, available_backends

log = logging.getLogger("aerochannel")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

MODELS = ("z", "two-tx", "two-rx", "relay-passive", "relay-endtoend", "relay-active", "ternary")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- analytic ----------------------------------------------------------------

def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValueError(f"model {args.model!r} needs " + ", ".join(f"--{m}" for m in missing))


def analytic_rows(args) -> list[tuple[str, float, float]]:
    """(quantity, closed form, exact value on the explicit channel) per model."""
    m = args.model
    p2 = args.p2 if args.p2 is not None else 0.0
    q2 = args.q2 if args.q2 is not None else 0.0
    if m == "z":
        _need(args, "p1", "q1")
        prm = cf.ZParams(args.p1, args.q1)
        ch, px = cf.z_scenario(prm)
        return [("I(X;Y=1)", cf.mi_z(prm), dmc.per_output_mi(ch, px, 1))]
    if m in ("two-tx", "ternary"):
        _need(args, "p1", "q1")
        prm = cf.TwoPartyParams(args.p1, args.q1, p2, q2)
        if m == "two-tx":
            ch, px = cf.two_tx_channel(prm)
            return [("I(X1X2;Y=1)", cf.mi_two_tx(prm), dmc.per_output_mi(ch, px, 1))]
        ch, px = cf.ternary_channel(prm)
        return [("I(X;Y=1)", cf.mi_ternary(prm), dmc.per_output_mi(ch, px, 1))]
    if m == "two-rx":
        _need(args, "p1", "q1", "q2")
        prm = cf.TwoPartyParams(args.p1, args.q1, 0.0, q2)
        ch, px = cf.two_rx_channel(prm)
        r1, r2 = cf.mi_two_rx(prm)
        e1 = dmc.per_output_mi(cf.marginal_receiver(ch, 0), px, 1)
        e2 = dmc.per_output_mi(cf.marginal_receiver(ch, 1), px, 1)
        return [("I(X;Y1=1)", r1, e1), ("I(X;Y2=1)", r2, e2)]
    if m in ("relay-passive", "relay-endtoend"):
        _need(args, "p1", "q1", "q2")
        prm = cf.RelayParams(args.p1, args.q1, q2)
        first, second, px = cf.relay_channels(prm)
        exact = dmc.per_output_mi(dmc.cascade(first, second), px, 1)
        closed = cf.mi_passive_relay_eq7(prm) if m == "relay-passive" else cf.mi_relay_end_to_end(prm)
        return [("I(X;Z=1)", closed, exact)]
    if m == "relay-active":
        _need(args, "q2", "boost")
        prm = cf.RelayParams(args.p1 or 0.0, args.q1 or 0.0, q2, boost=args.boost,
                             delay_exceeds_incubation=True)
        exact = dmc.per_output_mi(dmc.z_channel(q2), dmc.binary_input(args.boost), 1)
        return [("I(X;Z=1)", cf.mi_active_relay(prm), exact)]
    raise ValueError(f"unknown model {m!r}")


def cmd_analytic(args) -> int:
    rows = analytic_rows(args)
    print(f"{'model':<16}{'quantity':<14}{'closed_form':>16}{'exact_dmc':>16}{'difference':>16}")
    for quantity, closed, exact in rows:
        print(f"{args.model:<16}{quantity:<14}{closed:>16.10f}{exact:>16.10f}{closed - exact:>16.3e}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("model,quantity,closed_form,exact,difference\n")
            for quantity, closed, exact in rows:
                fh.write(f"{args.model},{quantity},{closed!r},{exact!r},{closed - exact!r}\n")
    return EXIT_OK


# -- simulation helpers ------------------------------------------------------

def _load_env(args):
    env = environment.resolve(args.env)
    if getattr(args, "n_events", None) is not None:
        env = replace(env, n_events=args.n_events)
    return env


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RuntimeError(f"output directory {out} is not writable: {exc}") from None
    return out


def _write_manifest(out: Path, args, env, outputs, started: float, extra=None) -> None:
    manifest = {
        "command": ["aerochannel", *args.argv],
        "config": args.env,
        "config_hash": environment.document_hash(env) if env is not None else None,
        "seed": getattr(args, "seed", None),
        "runs": getattr(args, "runs", None),
        "n_events": env.n_events if env is not None else None,
        "outputs": sorted(outputs),
        "version": __version__,
        "backend": args.backend or BACKEND,
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "duration_s": round(time.time() - started, 3),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _estimate(args, env):
    return engine.estimate_transitions(env, args.runs, args.seed, workers=args.workers,
                                       backend=args.backend)


def cmd_simulate(args) -> int:
    started = time.time()
    env = _load_env(args)
    out = _prepare_out(args.out)
    est = _estimate(args, env)
    (out / "transitions.csv").write_text(engine.transitions_csv(est))
    (out / "trials.csv").write_text(engine.trials_csv(est))
    (out / "environment.json").write_text(environment.dumps(env))
    flagged = sum(t.flagged for t in est.trials)
    _write_manifest(out, args, env, ["transitions.csv", "trials.csv", "environment.json"],
                    started, {"capped_trials": flagged})
    for rid in est.receiver_ids:
        print(f"{rid:<16} q_hat(all bins) = {est.total_q(rid):.6g}")
    print(f"wrote {out / 'transitions.csv'}")
    return EXIT_OK


def parse_loads(spec: str) -> np.ndarray:
    """``start:stop:points,log|lin`` or a comma-separated list of values."""
    try:
        if ":" in spec:
            body, _, scale = spec.partition(",")
            start, stop, points = body.split(":")
            start, stop, points = float(start), float(stop), int(points)
            scale = scale.strip() or "log"
            if points < 1:
                raise ValueError
            if scale == "log":
                if start <= 0 or stop <= 0:
                    raise ValueError
                loads = np.geomspace(start, stop, points)
            elif scale == "lin":
                loads = np.linspace(start, stop, points)
            else:
                raise ValueError
        else:
            loads = np.array([float(x) for x in spec.split(",")])
    except ValueError:
        raise ValueError(f"--loads: cannot parse {spec!r}; expected start:stop:points,log|lin") from None
    if loads.size == 0 or np.any(loads <= 0):
        raise ValueError("--loads: viral loads must be positive")
    return loads


def _emission_from_estimate(est) -> EmissionConfig:
    w = est.emitted / est.emitted.sum()
    hist = tuple((float(lo), float(hi), float(wi)) for lo, hi, wi in zip(est.d_lo, est.d_hi, w))
    return EmissionConfig(diameter_distribution=hist)


_GNUPLOT = """# generated by aerochannel sweep
set logscale x
set xlabel "viral load (copies/mL)"
set ylabel "bit / event"
set y2label "probability / event"
set y2tics
set key outside
plot {plots}
"""


def cmd_sweep(args) -> int:
    started = time.time()
    loads = parse_loads(args.loads)
    env = _load_env(args) if args.env else None
    if args.estimate:
        est = engine.read_transitions_csv(Path(args.estimate).read_text())
        emission = env.emission_for(env.emitters[0]) if env is not None else _emission_from_estimate(est)
    elif env is not None:
        est = _estimate(args, env)
        emission = env.emission_for(env.emitters[0])
    else:
        raise ValueError("sweep needs --env or --estimate")
    n = args.n_events if args.n_events is not None else (env.n_events if env is not None else 1)
    theta = dose.InfectionThreshold(args.theta) if args.theta is not None else None

    out = _prepare_out(args.out)
    receivers = [args.receiver] if args.receiver else list(est.receiver_ids)
    outputs, plots = [], []
    for rid in receivers:
        curve = engine.rate_curve(est, rid, loads, emission, n)
        csv_name, dat_name = f"rate_curve_{rid}.csv", f"rate_curve_{rid}.dat"
        (out / csv_name).write_text(engine.rate_curve_csv(curve))
        (out / dat_name).write_text(engine.rate_curve_plotdata(curve))
        outputs += [csv_name, dat_name]
        plots.append(f"'{dat_name}' using 1:2 with linespoints title '{rid} R', "
                     f"'{dat_name}' using 1:3 axes x1y2 with lines title '{rid} linear'")
        k = int(np.argmax(curve.R_bits))
        msg = (f"{rid:<16} peak R = {curve.R_bits[k]:.4g} bit/event at load {loads[k]:.3g}; "
               f"n*Phi(max load) = {curve.nPhi[-1]:.4g}")
        if theta is not None:
            msg += (f"; Phi/Theta = {curve.nPhi[-1] / theta.theta:.4g}"
                    f" ({'infected' if dose.is_infected(curve.nPhi[-1], theta) else 'below threshold'})")
        print(msg)
    (out / "plot.gp").write_text(_GNUPLOT.format(plots=", \\\n     ".join(plots)))
    outputs.append("plot.gp")
    if not args.estimate:
        (out / "transitions.csv").write_text(engine.transitions_csv(est))
        outputs.append("transitions.csv")
    _write_manifest(out, args, env, outputs, started,
                    {"loads": args.loads, "theta": args.theta, "estimate": args.estimate})
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in BUILTIN_NAMES:
            print(name)
        return EXIT_OK
    if args.action == "export":
        if not args.name or not args.path:
            raise ValueError("usage: presets export NAME PATH")
        env = environment.builtin(args.name)
        Path(args.path).write_text(environment.dumps(env))
        print(f"wrote {args.path}")
        return EXIT_OK
    raise ValueError(f"unknown presets action {args.action!r}")


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aerochannel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"aerochannel {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analytic", help="closed-form infection rates vs. exact channel evaluation")
    a.add_argument("model", choices=MODELS)
    for name in ("p1", "q1", "p2", "q2", "boost"):
        a.add_argument(f"--{name}", type=float)
    a.add_argument("--csv", help="also write the table as CSV")
    a.set_defaults(func=cmd_analytic)

    def sim_flags(sp, env_required=True):
        sp.add_argument("--env", required=env_required,
                        help=f"builtin preset ({', '.join(BUILTIN_NAMES)}) or environment JSON path")
        sp.add_argument("--runs", type=int, default=90)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", required=True)
        sp.add_argument("--n-events", dest="n_events", type=int)
        sp.add_argument("--backend", choices=available_backends())

    s = sub.add_parser("simulate", help="estimate transition probabilities by Monte Carlo")
    sim_flags(s)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="infection rate, linear measure and dose versus viral load")
    sim_flags(w, env_required=False)
    w.add_argument("--loads", default="1e4:1e10:25,log")
    w.add_argument("--theta", type=float, help="infection threshold (virions)")
    w.add_argument("--estimate", help="reuse a transitions CSV instead of simulating")
    w.add_argument("--receiver", help="only this receiver id")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("presets", help="list or export builtin environments")
    r.add_argument("action", choices=("list", "export"))
    r.add_argument("name", nargs="?")
    r.add_argument("path", nargs="?")
    r.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "runs", 1) is not None and getattr(args, "runs", 1) < 1:
            raise ValueError("--runs must be at least 1")
        if getattr(args, "workers", 1) < 1:
            raise ValueError("--workers must be at least 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - top-level guard
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
