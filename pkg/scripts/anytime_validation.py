#!/usr/bin/env python3
"""Single-chain convergence to the length-biased law (desk scale).

Writes results/anytime/{anytime.csv, anytime_p*.svg, config.json}. Pass
--preset paper for the full 2^18-chain version (slow).
"""

import sys

from anytime_mc.cli import main

if __name__ == "__main__":
    sys.exit(main(["validate-anytime", "--out", "results/anytime",
                   "--seed", "1"] + sys.argv[1:]))
