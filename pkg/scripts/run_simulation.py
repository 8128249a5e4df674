"""Run the scenario grid and write the long results table plus bias summary.

    python3 scripts/run_simulation.py --out results/sim --seed 0 [--full] [--jobs 4]

Equivalent to ``covprior simulate``; kept as a script for batch use.
"""

import sys

from covprior.cli import main

if __name__ == "__main__":
    sys.exit(main(["simulate", *sys.argv[1:]]))
