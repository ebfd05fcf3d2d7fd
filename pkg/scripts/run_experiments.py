#!/usr/bin/env python3
"""End-to-end experiment pipeline on the packaged configs.

Estimates the shape constant along two directions and from a box start,
derives a shape-test horizon from the estimate, and runs the sandwich check.
Everything lands under --out (default ./out); each step writes a manifest,
so any piece can be rerun bit-exactly on its own.
"""

import argparse
import json
import math
import sys
from pathlib import Path

from outburst.cli import main as outburst_main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(args: list[str]) -> None:
    print(f"$ outburst {' '.join(args)}")
    rc = outburst_main(args)
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out", help="output root (default ./out)")
    parser.add_argument(
        "--target-events",
        type=float,
        default=1e4,
        help="expected outburst count used to pick the shape-test horizon",
    )
    args = parser.parse_args()
    out = Path(args.out)

    run(["simulate", "--config", str(CONFIGS / "simulate_default.json"),
         "--output-dir", str(out / "simulate")])
    run(["replay-check", str(out / "simulate")])

    for name in ("estimate_mu_default", "estimate_mu_diagonal", "estimate_mu_box"):
        run(["estimate-mu", "--config", str(CONFIGS / f"{name}.json"),
             "--output-dir", str(out / name)])

    mu_file = out / "estimate_mu_default" / "mu_estimate.json"
    mu_hat = json.loads(mu_file.read_text())["mu_hat"]
    # In d=2 the event count to time t is about pi t^3 / (3 mu^2).
    t = (3 * args.target_events * mu_hat**2 / math.pi) ** (1 / 3)
    run(["shape-test", "--config", str(CONFIGS / "shape_default.json"),
         "--mu-file", str(mu_file), "--t-max", f"{t:.3f}",
         "--output-dir", str(out / "shape")])

    run(["selftest"])
    print(f"all artifacts under {out}/")


if __name__ == "__main__":
    main()
