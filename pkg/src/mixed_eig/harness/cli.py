"""``mixed-eig <subcommand> --config FILE [--out DIR] [--seed N] [--plot]``.

Exit status: 0 success, 1 configuration error, 2 solver non-convergence in
a required row, 3 property violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..eigsolve import SolverError
from ..energy import EnergyError
from ..geometry import GeometryError
from ..rearrange import RearrangeError
from .config import EXPERIMENTS, ConfigError, parse_config
from .experiments import EXPERIMENT_RUNNERS
from .report import EXIT_CONFIG, EXIT_SOLVER, emit_report

log = logging.getLogger("mixed_eig")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixed-eig",
        description="First Dirichlet eigenvalue of -a Delta_p + b (-Delta_p)^s on lattice domains, "
        "with polarization and symmetrization experiments.",
    )
    parser.add_argument("subcommand", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="flat 'section.key = value' file")
    parser.add_argument("--out", help="output directory (default: ./mixed-eig-out/<subcommand>)")
    parser.add_argument("--seed", type=int, help="overrides run.seed")
    parser.add_argument("--plot", action="store_true", help="also write plot.svg")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"config error: --set {item!r} is not KEY=VALUE", file=sys.stderr)
            return EXIT_CONFIG
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    try:
        cfg = parse_config(args.config, overrides)
        report = EXPERIMENT_RUNNERS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, EnergyError, RearrangeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    out = Path(args.out) if args.out else Path("mixed-eig-out") / args.subcommand
    emit_report(report, out, plot=args.plot)
    code = report.exit_code
    print(f"{args.subcommand}: {len(report.rows)} rows, {len(report.checks)} checks, "
          f"{len(report.violations)} violations, exit {code} -> {out}")
    for label in report.unconverged:
        print(f"  not converged: {label}", file=sys.stderr)
    for check in report.violations:
        print(f"  violated: {check.name} [{check.detail}] margin={check.margin!r}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
