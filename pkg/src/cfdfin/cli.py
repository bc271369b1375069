"""Command line entry point: ``cfdfin {run,grid,synth,validate} CONFIG``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import CfdFinError
from .runner import export_synthetic, load_dataset, run_scenario, sensitivity_grid

log = logging.getLogger("cfdfin")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfdfin", description="Revenue risk, financing and LCOE of wind parks under support contracts.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "solve every park and contract, write report tables"),
        ("grid", "capex/opex sensitivity grid of fleet LCOE reductions"),
        ("synth", "export the configured synthetic dataset as CSV"),
        ("validate", "check the config (and data) without solving"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name == "synth":
            p.add_argument("--out", default=None, help="target directory (default <output>/<name>/data)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        loaded = load_config(args.config, seed=args.seed)
        if args.command == "validate":
            dataset = load_dataset(loaded)
            print(f"ok: {loaded.scenario.name}, {len(dataset.parks)} parks, "
                  f"years {dataset.years[0]}-{dataset.years[-1]}, "
                  f"{len(loaded.scenario.contracts)} contracts, hash {loaded.scenario.config_hash()[:12]}")
        elif args.command == "run":
            out = run_scenario(loaded)
            print(f"wrote {len(out.files)} files to {out.directory}")
        elif args.command == "grid":
            out = sensitivity_grid(loaded)
            print(f"wrote {len(out.files)} files to {out.directory}")
        else:
            directory = export_synthetic(loaded, args.out)
            print(f"wrote dataset to {directory}")
    except CfdFinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
