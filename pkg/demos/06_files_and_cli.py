# Saving a pair to disk and driving the command line from Python.

import json
import tempfile
from pathlib import Path

import numpy as np

from concurrent_dp import io
from concurrent_dp.cli import main
from concurrent_dp.fixtures import random_close_pair

tmp = Path(tempfile.mkdtemp())
pair = random_close_pair(2, 2, 2, np.random.default_rng(11), step_epsilon=0.6, leak=0.1)
io.save_pair(pair, tmp / "pair.yaml")
print((tmp / "pair.yaml").read_text()[:400], "...\n")

code = main(["verify", "approx", str(tmp / "pair.yaml"), "--eps", "1.0", "--delta", "0.5",
             "--witness-out", str(tmp / "worst.yaml")])
print("exit code", code)

main(["decompose", str(tmp / "pair.yaml"), "--eps", "1.0", "--delta", "0.5", "-o", str(tmp / "dec.yaml")])
main(["simulate", str(tmp / "dec.yaml"), str(tmp / "worst.yaml"), "--b", "0", "--report", str(tmp / "sim.json")])
print("simulated gap:", json.loads((tmp / "sim.json").read_text())["max_gap"])
