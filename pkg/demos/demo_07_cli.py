"""
Command-line runs
=================

Write a config file and drive the ``mvu`` command from Python.  Each run
leaves CSV/JSON products and a manifest with their hashes.
"""

import json
import tempfile
from pathlib import Path

from mvu.cli import main

work = Path(tempfile.mkdtemp())
cfg = work / "baseline.cfg"
cfg.write_text("market.r = 0.01\nmarket.mu = 0.05\nmc.paths = 20000\nmc.dt = 0.05\n", encoding="utf-8")

for args in (["solve"], ["figures", "--fig", "1"], ["simulate"], ["verify"]):
    out = work / args[0]
    code = main([*args, "--config", str(cfg), "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    print(args[0], "exit", code, "products", sorted(manifest["outputs"]))

###############################################################################
# Exit code 3 flags a failed check, here the doubled-investment control.
print("falsify exit code:", main(["equilibrium", "--config", str(cfg), "--out", str(work / "eq"), "--falsify"]))
