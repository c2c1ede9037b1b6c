"""Square-function constant G against the testing constants across atom counts and depths.

    python scripts/theorem_scaling.py --k 3 4 --extra 0 2
"""

import argparse

from nhsquare.config import RunConfig, build_setup
from nhsquare.verify import default_f_samples, theorem_constants


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--k", type=int, nargs="+", default=[3, 4], help="4^k atoms")
    ap.add_argument("--extra", type=int, nargs="+", default=[0, 2])
    ap.add_argument("--b", default="one", choices=["one", "block"])
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cols = ["T", "T_indicator", "G", "G_without_b", "G_over_T", "G_over_T_indicator"]
    print(",".join(["atoms", "g_max"] + cols))
    for k in args.k:
        base = build_setup(RunConfig.load(overrides=[
            f'measure={{"builtin": "lebesgue-surrogate", "k": {k}, "n": 1}}',
            f'b={{"type": "{args.b}"}}'], seed=args.seed))
        for extra in args.extra:
            s = base.refined(extra) if extra else base
            out = theorem_constants(s, default_f_samples(s))
            print(",".join([str(len(s.mu)), str(s.params.g_max)] + [f"{out[c]:.6g}" for c in cols]))


if __name__ == "__main__":
    main()
