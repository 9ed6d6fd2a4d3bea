#!/usr/bin/env python3
"""Length-bias correction across ensemble sizes K+1 in {2,4,8,16,32}.

Writes results/multichain/{multichain.csv, plateau_fit.csv, *.svg}. The
plateau_fit table compares the uncorrected plateau against d1(alpha, pi)/(K+1).
"""

import sys

from anytime_mc.cli import main

if __name__ == "__main__":
    sys.exit(main(["validate-multichain", "--out", "results/multichain",
                   "--seed", "1"] + sys.argv[1:]))
