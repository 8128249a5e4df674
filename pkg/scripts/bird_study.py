"""Posterior correlations for the reference bird table (or --counts FILE).

    python3 scripts/bird_study.py --out results/birds --mode both

Defaults to the synthetic reference table when no counts file is given.
"""

import sys

from covprior.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--counts" not in args and "--synth" not in args:
        args.append("--synth")
    sys.exit(main(["birds", *args]))
