"""Command-line entry point.

Every subcommand writes a plot-ready table (CSV) or document (JSON) to
``--out`` or standard output. Outputs start with a metadata block echoing the
tool version and the parsed command, so a file alone is enough to rerun it.

Exit status: 0 on success, 2 on invalid input, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AsyncLtiError, NumericalError, ValidationError
from .markov import averaged_markov_parameters, markov_parameters
from .model import AsyncConfig, load_system_file, validate_system
from .simulator import INPUT_MODES, SimulationPlan, simulate, simulate_ensemble, trajectory_from_csv, trajectory_to_csv
from .stability import is_mean_square_stable, stability_map
from .sysid import benchmark_identification, identify

log = logging.getLogger("asynclti")


def grid(text):
    """``a:b:n`` -> ``n`` evenly spaced values from ``a`` to ``b`` inclusive."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("grid needs n >= 1")
    return np.linspace(a, b, n) if n > 1 else np.array([a])


def int_list(text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="asynclti", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: standard output)")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--system", required=True, help="JSON file with A, B, U, sigma_w2")

    cfg = argparse.ArgumentParser(add_help=False)
    cfg.add_argument("--p", type=float, help="update probability (overrides the file)")
    cfg.add_argument("--q", type=float, help="delay parameter (overrides the file)")
    cfg.add_argument("--h", type=int, help="maximum delay (overrides the file)")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--steps", type=int, default=1000)
    sim.add_argument("--seed", type=u64, default=0)
    sim.add_argument("--input-mode", choices=INPUT_MODES, default="stochastic")
    sim.add_argument("--u-const", type=float_list, help="constant input v1,v2,...")
    sim.add_argument("--x0-std", type=float, help="draw x_0 ~ N(0, s^2 I) instead of x_0 = 0")
    sim.add_argument("--noise-free", action="store_true", help="ignore process noise")

    sub.add_parser("simulate", parents=[common, system, cfg, sim], help="write one trajectory")
    p = sub.add_parser("ensemble", parents=[common, system, cfg, sim], help="snapshots of many runs")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--snapshots", type=int_list, help="snapshot times t1,t2,... (default 0 and --steps)")

    sub.add_parser("stability", parents=[common, system, cfg], help="mean-square stability verdict")

    p = sub.add_parser("stability-map", parents=[common, system], help="spectral radius over a (p, q) grid")
    p.add_argument("--h", type=int, default=2)
    p.add_argument("--p-grid", type=grid, default=grid("0.02:1.0:50"))
    p.add_argument("--q-grid", type=grid, default=grid("0.02:1.0:50"))

    p = sub.add_parser("identify", parents=[common], help="identify a randomized system from a trajectory")
    p.add_argument("--traj", required=True, help="trajectory CSV")
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--ridge", type=float, help="opt-in ridge added to C0")
    p.add_argument("--q", type=float, help="assumed delay parameter (labels model mismatch)")
    p.add_argument("--h", type=int, help="assumed maximum delay")

    p = sub.add_parser("benchmark", parents=[common, system], help="identification error versus T")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--checkpoints", type=int_list, default=[1000, 10000, 100000])
    p.add_argument("--seed", type=u64, default=0)
    p.add_argument("--burn-in", type=int, default=0)

    p = sub.add_parser("markov", parents=[common, system], help="Markov parameters")
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--p", type=float, help="if given, emit the averaged system's parameters")
    return parser


def _config(args, file_config):
    base = file_config or AsyncConfig()
    return AsyncConfig(
        base.p if getattr(args, "p", None) is None else args.p,
        base.q if getattr(args, "q", None) is None else args.q,
        base.h if getattr(args, "h", None) is None else args.h,
    )


def _meta(args):
    # the output path does not affect results, so identical runs stay byte-identical
    echo = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in sorted(vars(args).items()) if k != "out"}
    meta = {"tool": "asynclti", "version": __version__, "command": echo}
    for key in ("system", "traj"):
        path = getattr(args, key, None)
        if path and Path(path).is_file():
            meta[f"{key}_sha256"] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return meta


def _meta_lines(args):
    meta = _meta(args)
    lines = [f"{meta['tool']} {meta['version']}", "command " + json.dumps(meta["command"], sort_keys=True)]
    lines += [f"{k} {v}" for k, v in meta.items() if k.endswith("_sha256")]
    return lines


def _load(args):
    system, noise, file_config = load_system_file(args.system)
    config = _config(args, file_config)
    validate_system(system, config, noise).raise_if_invalid()
    return system, noise, config


def _plan(args, system, noise, config):
    x0_mean = x0_cov = None
    if args.x0_std is not None:
        x0_mean = np.zeros(system.d_x)
        x0_cov = args.x0_std ** 2 * np.eye(system.d_x)
    plan = SimulationPlan(system, config, noise, steps=args.steps, seed=args.seed,
                          input_mode=args.input_mode,
                          u_const=None if args.u_const is None else np.array(args.u_const),
                          x0_mean=x0_mean, x0_cov=x0_cov, noise_free=args.noise_free)
    plan.validate()
    return plan


def _cmd_simulate(args):
    system, noise, config = _load(args)
    traj = simulate(_plan(args, system, noise, config))
    return trajectory_to_csv(traj, _meta_lines(args))


def _cmd_ensemble(args):
    system, noise, config = _load(args)
    plan = _plan(args, system, noise, config)
    times = args.snapshots or [0, args.steps]
    snaps = simulate_ensemble(plan, args.runs, times)
    return snaps.to_csv(_meta_lines(args))


def _cmd_stability(args):
    system, noise, config = _load(args)
    return is_mean_square_stable(system, config).to_json(meta=_meta(args)) + "\n"


def _cmd_stability_map(args):
    system, _, _ = load_system_file(args.system)
    validate_system(system).raise_if_invalid()
    for name, g in (("p-grid", args.p_grid), ("q-grid", args.q_grid)):
        if np.any(g <= 0) or np.any(g > 1):
            raise ValidationError(f"--{name} values must lie in (0,1]")
    result = stability_map(system, args.h, args.p_grid, args.q_grid)
    return result.to_csv(_meta_lines(args))


def _cmd_identify(args):
    path = Path(args.traj)
    traj = trajectory_from_csv(path.read_text(), source=str(path))
    assumed = None
    if args.q is not None or args.h is not None:
        assumed = AsyncConfig(1.0, 1.0 if args.q is None else args.q, 0 if args.h is None else args.h)
    result = identify(traj, burn_in=args.burn_in, ridge=args.ridge, assumed_config=assumed)
    return result.to_json(meta=_meta(args)) + "\n"


def _cmd_benchmark(args):
    system, noise, _ = load_system_file(args.system)
    validate_system(system, AsyncConfig(args.p), noise).raise_if_invalid()
    table = benchmark_identification(system, args.p, noise, args.checkpoints, args.trials,
                                     base_seed=args.seed, burn_in=args.burn_in)
    return table.to_csv(_meta_lines(args))


def _cmd_markov(args):
    system, _, _ = load_system_file(args.system)
    validate_system(system).raise_if_invalid()
    if args.p is None:
        mp = markov_parameters(system, args.K)
    else:
        validate_system(system, AsyncConfig(args.p)).raise_if_invalid()
        mp = averaged_markov_parameters(system, args.p, args.K)
    return mp.to_csv(_meta_lines(args))


COMMANDS = {
    "simulate": _cmd_simulate,
    "ensemble": _cmd_ensemble,
    "stability": _cmd_stability,
    "stability-map": _cmd_stability_map,
    "identify": _cmd_identify,
    "benchmark": _cmd_benchmark,
    "markov": _cmd_markov,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"asynclti {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"asynclti {args.command}: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        stage = exc.stage or args.command
        print(f"asynclti {args.command}: numerical failure in stage {stage}: {exc}", file=sys.stderr)
        return 3
    except AsyncLtiError as exc:
        print(f"asynclti {args.command}: {exc}", file=sys.stderr)
        return 3
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
