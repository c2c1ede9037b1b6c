"""z-scores of the good/all averaging identity across independent shift seeds.

    python scripts/averaging_calibration.py --seeds 24 --N 2000
"""

import argparse
import csv
import sys

import numpy as np

from nhsquare.config import RunConfig, build_setup
from nhsquare.verify import averaging_identity_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seeds", type=int, default=24)
    ap.add_argument("--N", type=int, default=2000)
    ap.add_argument("--config")
    args = ap.parse_args()

    setup = build_setup(RunConfig.load(args.config))
    w = csv.writer(sys.stdout)
    w.writerow(["seed", "generation", "pi_good", "z", "correlation_z", "pass"])
    zs, fails = [], 0
    for seed in range(args.seeds):
        rep = averaging_identity_experiment(setup, N=args.N, seed=seed)
        fails += not rep.passed
        for t in rep.trials:
            if not t["in_window"]:
                continue
            z = t["mean_diff"] / t["stderr"]
            cz = t["correlation"] / t["correlation_stderr"] if t["correlation"] is not None else ""
            zs.append(z)
            w.writerow([seed, t["generation"], t["pi_good"], z, cz, rep.passed])
    zs = np.array(zs)
    print(f"# {len(zs)} z-scores: mean {zs.mean():+.3f} std {zs.std():.3f}; "
          f"{fails}/{args.seeds} seeds fail the 3-stderr check", file=sys.stderr)


if __name__ == "__main__":
    main()
