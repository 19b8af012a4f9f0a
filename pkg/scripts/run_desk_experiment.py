#!/usr/bin/env python3
"""Reference-scale experiment (n = 40): 10 recovery trials plus a noiseless
convergence trace. Writes summary.csv, report.json, and trace.csv under
out/desk. Takes a few minutes single-threaded."""

import pathlib
import sys

from mixsense.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent
CONFIG = HERE / "configs" / "desk.json"
OUT = HERE / "out" / "desk"

if __name__ == "__main__":
    code = main(["run", "--config", str(CONFIG), "--out", str(OUT)])
    code = code or main(["trace", "--config", str(CONFIG), "--out", str(OUT)])
    print(f"outputs in {OUT}")
    sys.exit(code)
