"""Command line entry point: ``fieldscatter <stage> --config <path>``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import FieldScatterError, NumericalError
from .pipeline import STAGES, PipelineConfig, run_stage

log = logging.getLogger("fieldscatter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldscatter", description=__doc__)
    parser.add_argument("stage", choices=STAGES)
    parser.add_argument("--config", required=True, help="TOML pipeline configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed (u64)")
    parser.add_argument("--out", default="run", help="artifact directory (default: ./run)")
    parser.add_argument("--strict", action="store_true", help="treat convergence warnings as errors")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.seed is not None and not 0 <= args.seed < 2**64:
        log.error("--seed must be an unsigned 64-bit integer")
        return 2
    try:
        config = PipelineConfig.load(args.config).with_seed(args.seed)
        return run_stage(config, args.stage, args.out, strict=args.strict)
    except FieldScatterError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except FloatingPointError as exc:
        log.error("numerical failure: %s", exc)
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
