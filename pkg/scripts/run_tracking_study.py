#!/usr/bin/env python3
"""Tracking error of the rescaled filter path across eps.

Writes tracking.json with per-eps medians of sup |m~_s - X1| and the
fitted constant of the 1/sqrt(T_eps) decay.
"""
import argparse
import json
import pathlib
import sys

from smallnoise import cli

HERE = pathlib.Path(__file__).resolve().parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--config", default=str(HERE / "configs" / "tracking_pure.json")
    )
    ap.add_argument("--out", default=str(HERE.parent / "results" / "tracking"))
    args = ap.parse_args()

    code = cli.main(["tracking", "--config", args.config, "--out", args.out])
    if code != 0:
        return code
    stats = json.loads((pathlib.Path(args.out) / "tracking.json").read_text())
    for entry in stats["entries"]:
        print(
            f"eps={entry['eps']}: median sup deviation {entry['median_sup_dev']:.4f}"
            f" (fitted C {entry['fitted_C']:.3f})"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
