#!/usr/bin/env python3
"""SMC posterior over the LGSSM autoregression parameter, both move modes.

Runs the fixed-move and anytime-move samplers at the same seed and prints
the posterior means side by side; full outputs land in results/smc_*.
"""

import json
import sys

from anytime_mc.cli import main


def run(mode, extra=()):
    out = f"results/smc_{mode}"
    rc = main(["smc", "--model", "lgssm", "--mode", mode, "--K", "512",
               "--budget", "300", "--schedule", "linear",
               "--out", out, "--seed", "1", *extra])
    if rc:
        sys.exit(rc)
    with open(f"{out}/summary.json") as fh:
        s = json.load(fh)
    print(f"{mode:8s} posterior mean {s['posterior_mean']:.4f} "
          f"sd {s['posterior_sd']:.4f} logZ {s['log_normalizer']:.3f}")


if __name__ == "__main__":
    run("fixed", sys.argv[1:])
    run("anytime", sys.argv[1:])
