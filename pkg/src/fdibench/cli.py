"""Command-line front end.

Subcommands:

    bench sweep  --system ieee9 --detectors sve,svm-gaussian --reps 50 \
                 --grid 0.1:1.0:10 --noise 0.01 --seed 0 --out results.csv
    bench case   --system ieee57 [--matrix]
    bench curve  --algorithm opwm --system ieee9 --steps 2000 ...

Exit codes: 0 success, 2 bad configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .attacks import AttackSpec, assemble_dataset, generate_trial
from .dc_grid import build_dc_model, model_debug_rows
from .errors import ConfigError, ContractError, FdiBenchError
from .matpower import BUILTIN_NAMES, load_builtin, serialize_case
from .online import ONLINE_ALGORITHMS, make_state, run_stream
from .sweep import (DEFAULT_GRID, DETECTOR_NAMES, SweepConfig, export_results,
                    run_sweep)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_grid(text):
    """start:stop:count -> evenly spaced grid, or a comma list of points."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("grid must be start:stop:count or a comma list")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"bad grid spec {text!r}") from exc
        if count < 1:
            raise ConfigError("grid count must be >= 1")
        return tuple(round(float(g), 12) for g in np.linspace(start, stop, count))
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {text!r}") from exc


def _cmd_sweep(args):
    detectors = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
    grid = _parse_grid(args.grid) if args.grid else DEFAULT_GRID
    config = SweepConfig(
        system=args.system,
        detectors=detectors,
        grid=grid,
        repetitions=args.reps,
        noise_scale=args.noise,
        seed=args.seed,
    )
    result = run_sweep(config)
    if args.out:
        export_results(result, args.out)
        print(f"wrote {args.out} and {args.out}.manifest.jsonl")
    else:
        for point in result.points:
            for det in detectors:
                print(f"{args.system} {det} kappa/N={point.kappa_over_n:g} "
                      f"kappa={point.kappa} acc={point.means['acc'][det]:.4f}")
    return EXIT_OK


def _cmd_case(args):
    case = load_builtin(args.system)
    if args.matrix:
        model = build_dc_model(case, args.noise)
        d = model.n_states
        print("measurement," + ",".join(f"x{k}" for k in range(d)))
        for row in model_debug_rows(model):
            print(",".join(row))
    else:
        sys.stdout.write(serialize_case(case))
    return EXIT_OK


def _cmd_curve(args):
    case = load_builtin(args.system)
    model = build_dc_model(case, args.noise)
    n = model.n_measurements
    kappa_star = n - model.n_states + 1
    kappa = args.kappa if args.kappa else max(1, kappa_star - 1)
    kind = "unobservable" if kappa >= kappa_star else "observable"

    def pool(role, count):
        trials = [
            generate_trial(model, AttackSpec(kind=kind, kappa=kappa,
                                             seed=args.seed * 1_000_003 + role * 100_000 + t))
            for t in range(count)
        ]
        return assemble_dataset(trials, G=n)

    n_trials = max(1, -(-args.steps // n))
    train_ds = pool(0, n_trials)
    test_ds = pool(1, max(1, -(-500 // n)))
    X, y = train_ds.as_matrix()[:args.steps], train_ds.labels[:args.steps]
    state = make_state(args.algorithm, X.shape[1])
    _, curve, mistakes = run_stream(state, X, y, test_ds.as_matrix(),
                                    test_ds.labels, eval_every=args.eval_every)
    print("step,accuracy")
    for s, a in zip(curve.steps, curve.accuracy):
        print(f"{s},{a!r}")
    print(f"# mistakes={mistakes} kappa={kappa} kind={kind}", file=sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a sparsity sweep and export CSV")
    p.add_argument("--system", required=True, choices=BUILTIN_NAMES)
    p.add_argument("--detectors", default="sve",
                   help=f"comma list from {','.join(DETECTOR_NAMES)}")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--grid", default="",
                   help="start:stop:count or comma list of kappa/N points")
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("case", help="print a bundled case, or its model matrix as CSV")
    p.add_argument("--system", required=True, choices=BUILTIN_NAMES)
    p.add_argument("--matrix", action="store_true",
                   help="print the measurement matrix instead of the case text")
    p.add_argument("--noise", type=float, default=0.01)
    p.set_defaults(func=_cmd_case)

    p = sub.add_parser("curve", help="stream samples through an online learner")
    p.add_argument("--algorithm", required=True, choices=sorted(ONLINE_ALGORITHMS))
    p.add_argument("--system", default="ieee9", choices=BUILTIN_NAMES)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--kappa", type=int, default=0,
                   help="attack sparsity; default is one below the unobservable minimum")
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_curve)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FdiBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
