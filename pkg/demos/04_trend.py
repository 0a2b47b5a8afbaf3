"""Run the desk-scale trend comparison and compare the algorithms.

Equivalent to

    hetqfl --config configs/trend.yaml --out runs/trend
    hetqfl --compare runs/trend/qfl_fedavg runs/trend/pqfl runs/trend/spqfl

and takes a couple of minutes on one core.
"""
from pathlib import Path

from hetqfl.cli import compare, main

root = Path(__file__).resolve().parents[1]
out = root / "runs" / "trend"
main(["--config", str(root / "configs" / "trend.yaml"), "--out", str(out), "--quiet"])
print(compare([out / a for a in ("qfl_fedavg", "pqfl", "spqfl")], out / "compare"))
