"""Run every experiment on the default configuration and print the headline numbers.

    python scripts/run_default.py --out reports
"""

import argparse
import json
from pathlib import Path

from nhsquare.cli import verify_all
from nhsquare.config import RunConfig

HEADLINE = {
    "hypotheses": ["domination_max_ratio", "C_holder"],
    "goodness": ["enumerate", "monte_carlo", "z"],
    "schur": ["operator_norm", "growth"],
    "averaging": ["max_abs_z"],
    "cases": ["max_comparable_count", "doubling_step_C"],
    "final_sum": ["ratio", "bound", "growth"],
    "carleson": ["C_carl", "C_carl_refined", "C_emb"],
    "quadrature": ["oracle_rel"],
    "necessity": ["decay_constant", "model_rel_error"],
    "theorem": ["base", "T", "G"],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="reports")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cfg = RunConfig.load(seed=args.seed)
    out = Path(args.out)
    status, summary = verify_all(cfg, out)
    for item in summary["experiments"]:
        rep = json.loads((out / f"{item['name']}.json").read_text())
        vals = ", ".join(f"{k}={rep['summary'][k]:.4g}" for k in HEADLINE[item["name"]]
                         if isinstance(rep["summary"].get(k), (int, float)))
        print(f"  {item['name']:<12} {vals}")
    raise SystemExit(status)


if __name__ == "__main__":
    main()
