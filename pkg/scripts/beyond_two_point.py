"""Compare posterior widths of g from scattering, bandpower and combined summaries.

    python3 scripts/beyond_two_point.py [--config configs/beyond_two_point.toml] [--n-obs 20]
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from fieldscatter.experiments import SUMMARY_KINDS, compare_summaries
from fieldscatter.pipeline import PipelineConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=Path(__file__).parents[1] / "configs" / "beyond_two_point.toml")
    parser.add_argument("--truth", type=float, nargs=2, default=[1.0, 0.7], metavar=("A", "G"))
    parser.add_argument("--n-obs", type=int, default=20)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("fieldscatter.flows").setLevel(logging.WARNING)

    config = PipelineConfig.load(args.config)
    start = time.perf_counter()
    result = compare_summaries(config, args.truth, args.n_obs)
    std = {kind: result.std_of(kind, "g") for kind in SUMMARY_KINDS}
    print(f"finished in {time.perf_counter() - start:.0f} s")
    print(f"{'obs':>4}" + "".join(f"{kind:>12}" for kind in SUMMARY_KINDS))
    for i in range(args.n_obs):
        print(f"{i:4d}" + "".join(f"{std[kind][i]:12.4f}" for kind in SUMMARY_KINDS))
    better = np.mean(std["scattering"] < std["bandpower"])
    ratio = std["combined"] / np.minimum(std["scattering"], std["bandpower"])
    print(f"scattering tighter than bandpowers: {better:.0%}")
    print(f"combined / best single: median {np.median(ratio):.3f}, max {ratio.max():.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
