"""Operator norm of the Schur matrix as the finest generation grows.

    python scripts/schur_scaling.py --extra 3
"""

import argparse

from nhsquare.config import RunConfig, build_setup
from nhsquare.verify import power_iteration, schur_matrix

MEASURES = {
    "lebesgue": [],
    "cantor": ['measure={"builtin": "cantor", "depth": 6}'],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--extra", type=int, default=3, help="generations beyond the default g_max")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    print("measure,g_max,cubes,norm,growth")
    for name, overrides in MEASURES.items():
        base = build_setup(RunConfig.load(overrides=overrides, seed=args.seed))
        prev = None
        for extra in range(args.extra + 1):
            s = base.refined(extra) if extra else base
            M = schur_matrix(s.mu, s.tracked, s.lam, s.params.alpha)
            norm = power_iteration(M.A)[0]
            growth = "" if prev is None else f"{norm / prev - 1:.4f}"
            print(f"{name},{s.params.g_max},{len(M.cubes)},{norm:.6f},{growth}")
            prev = norm


if __name__ == "__main__":
    main()
