#!/usr/bin/env python3
"""Noise sweep at the reference scale: mean worst-component error vs noise
level, 10 trials per level. In 64-bit arithmetic, levels below ~1e-7 start
to brush the floating-point floor of the refinement stage, so the sweep
config stops there. Writes sweep.csv under out/sweep."""

import pathlib
import sys

from mixsense.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent
CONFIG = HERE / "configs" / "noise_sweep.json"
OUT = HERE / "out" / "sweep"

if __name__ == "__main__":
    code = main(["sweep-noise", "--config", str(CONFIG), "--out", str(OUT)])
    print(f"outputs in {OUT}")
    sys.exit(code)
