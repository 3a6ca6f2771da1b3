"""
Running experiments from a config
=================================

The command line reads a YAML config, derives per-experiment seeds from
the master seed, runs the checks and writes report.json, summary.csv,
diagnostics.json and the normalised config into a timestamped directory.
The example config ends with a negative control, so the exit code is 1.
"""
import sys
import tempfile
from pathlib import Path

from bismutlab.cli import main

config = Path(__file__).parent / "configs" / "example.yaml"
with tempfile.TemporaryDirectory() as root:
    code = main(["run", str(config), "--output-root", root])
    run_dir = next(Path(root).iterdir())
    print("exit code", code)
    print((run_dir / "summary.csv").read_text())
main(["list-models"])
sys.exit(0)
