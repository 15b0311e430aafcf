"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 failed
acceptance assertion in a certify run.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, resolve_threads, validate
from .io import EmitError, emit_csv, format_value

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foerster", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML run configuration")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the config)")
        sp.add_argument("--threads", type=int, help="worker processes (overrides config and FOERSTER_THREADS)")
        sp.add_argument("--no-plots", action="store_true", help="skip SVG emission")

    common(sub.add_parser("run", help="run the scenario named in the config"))
    cert = sub.add_parser("certify", help="run the bound certification")
    common(cert, config_required=False)
    cert.add_argument("--samples", type=int, help="Haar samples (overrides the config)")

    dump = sub.add_parser("dump-waveform", help="tabulate the drive waveforms of a protocol")
    dump.add_argument("protocol", choices=["pi2pi", "arp", "to", "rank_two"])
    dump.add_argument("--omega-mhz", type=float, default=10.0, help="Omega_max / 2pi in MHz")
    dump.add_argument("--V-mhz", type=float, default=100.0, help="interaction V / 2pi in MHz (rank_two gap)")
    dump.add_argument("--params", help="comma-separated protocol parameters (arp: delta_r,T; to: delta,A,omega,phi)")
    dump.add_argument("--samples", type=int, default=2000)
    dump.add_argument("--trajectory", choices=["one", "two"],
                      help="instead of the waveforms, dump the propagated trajectory under this model")
    dump.add_argument("--input", default="11", choices=["00", "01", "10", "11"], help="computational input state")
    dump.add_argument("--out", help="CSV path (default: stdout)")

    sub.add_parser("list-scenarios", help="list built-in scenarios")
    return p


def _overrides(args) -> dict:
    o = {}
    if getattr(args, "out", None):
        o["out"] = args.out
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    return o


def _run(cfg: RunConfig, args) -> int:
    from .scenarios import run_scenario

    threads = resolve_threads(cfg.threads, args.threads)
    result = run_scenario(cfg, cfg.out, threads=threads, plots=False if args.no_plots else None,
                          log=lambda m: print(m, file=sys.stderr))
    print(f"scenario {result.name}: {len(result.rows)} rows -> {result.csv_path}")
    for key, value in result.summary.items():
        shown = format_value(value) if isinstance(value, (int, float)) else value
        print(f"  {key} = {shown}")
    if result.name == "certify" and not result.passed:
        print("certification FAILED", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def _dump(args) -> int:
    from .model import two_pi_mhz
    from .optimize import build_schedule
    from .pulses import pi_2pi_pi_schedule, rank_two_schedule

    omega = two_pi_mhz(args.omega_mhz)
    if args.protocol == "pi2pi":
        sched = pi_2pi_pi_schedule(omega)
    elif args.protocol == "rank_two":
        sched = rank_two_schedule(omega, two_pi_mhz(args.V_mhz))
    else:
        if not args.params:
            raise ConfigError(f"{args.protocol} needs --params")
        try:
            x = [float(v) for v in args.params.split(",")]
        except ValueError:
            raise ConfigError(f"--params must be comma-separated numbers, got {args.params!r}") from None
        expected = 2 if args.protocol == "arp" else 4
        if len(x) != expected:
            raise ConfigError(f"{args.protocol} takes {expected} parameters, got {len(x)}")
        sched = build_schedule(args.protocol, omega, x)
    if args.trajectory:
        from .model import OneEigenstate, TwoEigenstate
        from .propagate import PropagationOptions, computational_inputs, propagate, trajectory_table

        model = (OneEigenstate if args.trajectory == "one" else TwoEigenstate)(V=two_pi_mhz(args.V_mhz))
        col = ["00", "01", "10", "11"].index(args.input)
        traj = propagate(model, sched, computational_inputs(model)[:, col], PropagationOptions(samples=args.samples))
        table = trajectory_table(model, traj)
    else:
        table = sched.waveform_table(args.samples)
    cols = list(table)
    rows = [{c: float(table[c][i]) for c in cols} for i in range(len(table[cols[0]]))]
    if args.out:
        emit_csv(args.out, rows, cols)
    else:
        print(",".join(cols))
        for r in rows:
            print(",".join(format_value(r[c]) for c in cols))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-scenarios":
            from .scenarios import SCENARIOS

            for name, (_, desc) in SCENARIOS.items():
                print(f"{name:10s} {desc}")
            return EXIT_OK
        if args.command == "dump-waveform":
            return _dump(args)
        if args.command == "certify":
            overrides = _overrides(args) | {"scenario": "certify"}
            if args.config:
                cfg = load_config(args.config, overrides)
            else:
                cfg = RunConfig(**overrides)
                if cfg.seed is None:
                    raise ConfigError("certify needs --seed or a config with a seed")
            if args.samples is not None:
                cfg = cfg.replace(certify=type(cfg.certify)(args.samples, cfg.certify.s_values, cfg.certify.oracle_starts))
            validate(cfg)
            return _run(cfg, args)
        cfg = load_config(args.config, _overrides(args))
        return _run(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # keep the exit-code contract for unexpected failures
        traceback.print_exc()
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
