"""Command-line interface: ``dipolar-pigs <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure (including a sixth-order run whose negative-weight fraction
exceeds the limit), 4 input/output error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import DEFAULT_BETA, DEFAULT_TAU, RunConfig, load_config
from .drivers import (
    DESK_SIZES,
    LARGE_SIZES,
    convergence_scan,
    lattice_energy_scan,
    mf_scan,
    molecule_scan,
    order_test,
    phase_scan,
    pigs_run,
    quantumness_scan,
    write_csv,
)
from .errors import CheckpointError, ConfigError, DomainError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("dipolar_pigs")


def _floats(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text):
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _add_run_options(p):
    p.add_argument("--config", help="flat YAML run configuration; command-line options override it")
    p.add_argument("--geometry", choices=("triangular", "square"))
    p.add_argument("--n", type=int, dest="n_particles", help="number of rotors")
    p.add_argument("--large", action="store_true", help="use the large lattices (48 triangular, 64 square)")
    p.add_argument("--g", type=float)
    p.add_argument("--u", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--propagator", choices=("primitive", "mpe6"))
    p.add_argument("--trial", choices=("hartree", "constant"))
    p.add_argument("--seed", type=int)
    p.add_argument("--n-equil", type=int)
    p.add_argument("--n-measure", type=int)
    p.add_argument("--convention", choices=("periodic-sum", "minimum-image"))
    p.add_argument("--workers", type=int, default=1, help="parallel processes for scans")
    p.add_argument("--cache", help="directory for per-point results reused by later scans")
    p.add_argument("-o", "--output", default="-", help="CSV output path (default stdout)")


_RUN_KEYS = ("geometry", "n_particles", "g", "u", "tau", "beta", "propagator", "trial", "seed", "n_equil", "n_measure", "convention")


def _config_from_args(args, **extra):
    data = load_config(args.config).to_dict() if args.config else {}
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    data.update({k: v for k, v in extra.items() if v is not None})
    geometry = data.get("geometry", "triangular")
    data.setdefault("geometry", geometry)
    if "n_particles" not in data:
        data["n_particles"] = (LARGE_SIZES if args.large else DESK_SIZES)[geometry]
    data.setdefault("beta", DEFAULT_BETA[geometry])
    data.setdefault("tau", DEFAULT_TAU)
    return RunConfig.from_dict(data)


def _check_backend(rows):
    bad = [r for r in rows if not r.get("backend_valid", True)]
    if bad:
        log.error("sixth-order negative-weight fraction above the limit at %d point(s)", len(bad))
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_lattice_energy(args):
    conventions = ("periodic-sum", "minimum-image") if args.convention == "both" else (args.convention,)
    rows, manifest = lattice_energy_scan(args.geometry, args.sizes, conventions, args.r_max)
    write_csv(args.output, "lattice_energy", rows, manifest)
    return EXIT_OK


def cmd_pigs_run(args):
    cfg = _config_from_args(args, checkpoint=args.checkpoint, checkpoint_every=args.checkpoint_every)
    rows, manifest, _ = pigs_run(cfg)
    write_csv(args.output, "pigs", rows, manifest)
    return _check_backend(rows)


def cmd_phase_scan(args):
    cfg = _config_from_args(args)
    rows, manifest = phase_scan(cfg, args.g_grid, args.u_grid, args.workers, args.cache)
    write_csv(args.output, "pigs", rows, manifest)
    return _check_backend(rows)


def cmd_convergence_scan(args):
    cfg = _config_from_args(args)
    rows, manifest = convergence_scan(cfg, args.vary, args.values, args.workers, args.cache)
    write_csv(args.output, "pigs", rows, manifest)
    return _check_backend(rows)


def cmd_quantumness(args):
    fixed = "u" if args.vary == "g" else "g"
    cfg = _config_from_args(args, **{fixed: 0.0})
    rows, manifest = quantumness_scan(cfg, args.vary, args.values, args.workers, args.cache)
    write_csv(args.output, "quantumness", rows, manifest)
    return EXIT_OK


def cmd_molecule(args):
    rows, manifest = molecule_scan(args.u, args.g)
    write_csv(args.output, "molecule", rows, manifest)
    return EXIT_OK


def cmd_mf_scan(args):
    n = args.n or DESK_SIZES[args.geometry]
    rows, manifest = mf_scan(args.geometry, n, args.g_grid, args.u_grid, args.l_max, args.convention)
    write_csv(args.output, "mf_scan", rows, manifest)
    return EXIT_OK


def cmd_order_test(args):
    rows, manifest = order_test(args.u, args.taus)
    write_csv(args.output, "order_test", rows, manifest)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dipolar-pigs", description="PIGS and mean-field tools for dipolar rotors on 2D lattices")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lattice-energy", help="classical energy per particle of ordered states")
    p.add_argument("--geometry", choices=("triangular", "square"), required=True)
    p.add_argument("--sizes", type=_ints, required=True, help="comma-separated system sizes")
    p.add_argument("--convention", choices=("periodic-sum", "minimum-image", "both"), default="both")
    p.add_argument("--r-max", type=float, default=100.0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_lattice_energy)

    p = sub.add_parser("pigs-run", help="one PIGS run with an estimator report")
    _add_run_options(p)
    p.add_argument("--checkpoint", help="checkpoint file; resumed from when it exists")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_pigs_run)

    p = sub.add_parser("phase-scan", help="PIGS order parameters on a (g, u) grid")
    _add_run_options(p)
    p.add_argument("--g-grid", type=_floats, default=[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    p.add_argument("--u-grid", type=_floats, default=[0.0, 1.0, 2.0, 3.0])
    p.set_defaults(func=cmd_phase_scan)

    p = sub.add_parser("convergence-scan", help="PIGS runs at several tau or beta")
    _add_run_options(p)
    p.add_argument("--vary", choices=("tau", "beta"), required=True)
    p.add_argument("--values", type=_floats, required=True)
    p.set_defaults(func=cmd_convergence_scan)

    p = sub.add_parser("quantumness", help="PIGS potential energy against the classical minimum")
    _add_run_options(p)
    p.add_argument("--vary", choices=("g", "u"), required=True)
    p.add_argument("--values", type=_floats, required=True)
    p.set_defaults(func=cmd_quantumness)

    p = sub.add_parser("molecule", help="field and spacing for tabulated molecules")
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--g", type=float, default=1.0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_molecule)

    p = sub.add_parser("mf-scan", help="self-consistent mean-field order parameters on a grid")
    p.add_argument("--geometry", choices=("triangular", "square"), required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--g-grid", type=_floats, default=[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    p.add_argument("--u-grid", type=_floats, default=[0.0, 1.0, 2.0, 3.0])
    p.add_argument("--l-max", type=int, default=4)
    p.add_argument("--convention", choices=("periodic-sum", "minimum-image"), default="periodic-sum")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_mf_scan)

    p = sub.add_parser("order-test", help="time-step order of both propagators for one rotor")
    p.add_argument("--u", type=float, default=3.0)
    p.add_argument("--taus", type=_floats, default=[0.05, 0.075, 0.1, 0.15, 0.2, 0.3])
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_order_test)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (CheckpointError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
