#!/usr/bin/env python3
"""Run an eps-sweep from a config file and print the medians.

Defaults reproduce the linear convergence study; pass the tanh config for
the nonlinear one. Output lands in results/<config stem>/ unless --out
says otherwise.
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
        "--config", default=str(HERE / "configs" / "sweep_linear.json")
    )
    ap.add_argument("--out", default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    out = args.out or str(
        HERE.parent / "results" / pathlib.Path(args.config).stem
    )
    code = cli.main(
        ["sweep", "--config", args.config, "--threads", str(args.threads), "--out", out]
    )
    if code != 0:
        return code
    summary = json.loads((pathlib.Path(out) / "summary.json").read_text())
    for eps, med in summary["median_sup_err"].items():
        print(f"eps={eps}: median sup error {med:.4f}")
    print(f"report written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
