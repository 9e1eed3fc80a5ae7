"""
Cyber and physical risk in one ranking
======================================

Run every stage through the pipeline API (the ``gridrisk all`` command does
the same) and read back the combined report.
"""

import json
import tempfile
from pathlib import Path

from gridrisk.report import PipelineConfig, run_pipeline

out = Path(tempfile.mkdtemp(prefix="gridrisk-"))
paths = run_pipeline(PipelineConfig(out_dir=str(out), mix=0.5, seed=0))
for name, path in paths.items():
    print(f"{name:9s} {path}")

report = json.loads(paths["report"].read_text())
print("\nrank bus   cost  min_rho        index")
for pos, b in enumerate(report["buses"], 1):
    rho = "UNPROTECTABLE" if b["unprotectable"] else f"{b['min_rho']:.2f}"
    print(f"{pos:4d} {b['bus']:3d} {b['cyber_cost']:6.0f}  {rho:13s} {b['combined_index']:.3f}")
