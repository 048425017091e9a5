#!/usr/bin/env python3
"""Regenerate frontend/test/fixtures from small real experiment runs.

Usage: python scripts/make_plot_fixtures.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from crossdiff.harness import parse_config, run_experiment, write_report  # noqa: E402

FIXTURES = ROOT / "frontend" / "test" / "fixtures"

POC = """
[experiment]
kind = poc_vs_N
seed = 2024
replicas = 8
n_grid = 64, 128, 256, 512, 1024

[model]
horizon = 0.25
"""

SWEEP = """
[experiment]
kind = nonlocal_to_local
seed = 7

[grid]
cells_per_axis = 512
"""

ENERGY = """
[experiment]
kind = energy_dissipation
seed = 7
"""


def make(name: str, text: str, keep_snapshots: tuple[str, ...] = ()) -> None:
    out = FIXTURES / name
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    with tempfile.TemporaryDirectory() as tmp:
        report = run_experiment(parse_config(text))
        paths = write_report(report, tmp)
        shutil.copy(paths["report"], out / "report.csv")
        shutil.copy(paths["fits"], out / "fits.csv")
        for snap in keep_snapshots:
            shutil.copy(paths["snapshots"] / snap, out / snap)
    print(f"wrote {out}")


def main() -> None:
    make("poc", POC)
    make("sweep", SWEEP, keep_snapshots=("local_species1_final.grid",))
    make("energy", ENERGY)


if __name__ == "__main__":
    main()
