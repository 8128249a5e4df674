"""Direct prior draws of (sigma, rho) for every prior at d=2 and d=10.

    python3 scripts/prior_samples.py --out results/prior --n 1000 --seed 0

Writes one ``covprior prior-sample`` output directory per dimension.
"""

import argparse
import os
import sys

from covprior.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/prior")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mode", default="prior_study")
    a = ap.parse_args()
    code = 0
    for d in (2, 10):
        code |= main(["prior-sample", "--d", str(d), "--n", str(a.n), "--seed", str(a.seed), "--mode", a.mode,
                      "--out", os.path.join(a.out, f"d{d}")])
    sys.exit(code)
