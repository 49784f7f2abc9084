"""Event sizes found by the scan at several neighbourhood radii.

    python3 scripts/radius_sweep.py [lightning.csv] [--radii 0.1,0.2,0.3,0.4]
"""
from __future__ import annotations

import argparse
from pathlib import Path

from lightrain.ingest import load_lightning
from lightrain.scan import classify_event, radius_sweep

DEFAULT = Path(__file__).resolve().parents[1] / "data" / "synth7" / "lightning.csv"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("lightning", nargs="?", default=str(DEFAULT))
    ap.add_argument("--radii", default="0.1,0.2,0.3,0.4")
    ap.add_argument("--min-points", type=int, default=10)
    args = ap.parse_args()
    radii = [float(r) for r in args.radii.split(",")]
    strikes = load_lightning(args.lightning)
    print(f"{len(strikes)} strikes")
    for r, sizes in radius_sweep(strikes, radii, args.min_points).items():
        classes = ",".join(classify_event(s).value for s in sizes) or "-"
        print(f"r={r:<5} events={len(sizes):<3} sizes={sizes} classes={classes}")


if __name__ == "__main__":
    main()
