"""Coverage of 90% credible intervals for the model scalars over seeded
replicates simulated from the M1 model on an 8x8 grid, T = 24.

    python3 scripts/parameter_recovery.py [--replicates 20] [--iterations 5000]
"""
from __future__ import annotations

import argparse
import time

from lightrain.experiments import RECOVERY_PARAMS, recovery_replicate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--burnin", type=int, default=1000)
    ap.add_argument("--thin", type=int, default=4)
    ap.add_argument("--chains", type=int, default=2)
    args = ap.parse_args()
    start = time.perf_counter()
    hits = dict.fromkeys(RECOVERY_PARAMS, 0)
    worst_rhat = 0.0
    for seed in range(args.replicates):
        r = recovery_replicate(seed, args.iterations, args.burnin, args.thin, args.chains)
        for k in RECOVERY_PARAMS:
            hits[k] += r.covered[k]
        worst_rhat = max(worst_rhat, *r.rhat.values())
        cells = "  ".join(f"{k}=[{r.lower[k]:.3g},{r.upper[k]:.3g}]{'' if r.covered[k] else '*'}"
                          for k in RECOVERY_PARAMS)
        print(f"seed {seed:2d}  {cells}")
    print()
    for k in RECOVERY_PARAMS:
        print(f"{k:9s} covered {hits[k]}/{args.replicates}  (truth {r.truth[k]})")
    print(f"max Rhat {worst_rhat:.3f}; {time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
