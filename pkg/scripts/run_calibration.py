"""Run the full calibration pipeline and report the coverage check.

    python3 scripts/run_calibration.py [--config configs/calibration.toml] [--out run/calibration]
"""

import argparse
import logging
import sys
import time
from pathlib import Path

from fieldscatter.io import read_table
from fieldscatter.pipeline import PipelineConfig, run_all


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=Path(__file__).parents[1] / "configs" / "calibration.toml")
    parser.add_argument("--out", default="run/calibration")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("fieldscatter.flows").setLevel(logging.WARNING)

    config = PipelineConfig.load(args.config).with_seed(args.seed)
    start = time.perf_counter()
    code = run_all(config, args.out)
    if code:
        return code
    meta, _, rows = read_table(Path(args.out) / "coverage.csv")
    print(f"finished in {time.perf_counter() - start:.0f} s")
    print(f"unconverged posteriors: {meta['unconverged_posteriors']}")
    print(f"{'alpha':>6} {'ecp':>6} {'3 sigma':>8}")
    for alpha, ecp, *_, band3 in rows:
        print(f"{alpha:6.2f} {ecp:6.2f} {band3:8.3f}")
    print(f"within 3 sigma of the diagonal at every level: {meta['within_3sigma']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
