"""Rebuild the CLI fixtures and golden outputs in this directory.

Run from the repository root: ``python tests/data/regen.py``. Goldens are
produced by the installed ``sfdet`` itself, so only rerun this after an
intentional change to the output.
"""
import subprocess
import sys
from pathlib import Path

import numpy as np

from sfdet.formats import write_tensor

HERE = Path(__file__).parent

GOLDEN_RUNS = {
    "propose.json": ["propose", "--scores", "scores.sft", "--deltas", "deltas.sft",
                     "--k-pre", "300", "--k-post", "100", "--hpf"],
    "propose.csv": ["propose", "--scores", "scores.sft", "--deltas", "deltas.sft",
                    "--k-pre", "300", "--k-post", "100", "--format", "csv"],
    "sweep.csv": ["propose", "--scores", "scores.sft", "--deltas", "deltas.sft",
                  "--sweep", "1", "50", "200", "--format", "csv"],
    "flops_oriented-rcnn.txt": ["flops", "--model", "oriented-rcnn"],
    "flops_lsknet-t.json": ["flops", "--model", "lsknet-t", "--format", "json"],
    "worstcase.csv": ["worstcase", "--format", "csv"],
    "coverage.json": ["coverage", "--annotations", "labels", "--compare"],
    "stats.csv": ["stats", "--annotations", "labels", "--format", "csv"],
    "tile_plan.csv": ["tile", "--image-size", "4000", "3000", "--format", "csv"],
}


def make_fixtures():
    rng = np.random.default_rng(20240601)
    h, w, a = 12, 12, 15
    write_tensor(HERE / "scores.sft", rng.normal(size=(h, w, a)))
    write_tensor(HERE / "deltas.sft", rng.normal(scale=0.2, size=(h, w, 5 * a)))
    write_tensor(HERE / "map.sft", rng.uniform(size=(9, 10, 3)))


def main():
    make_fixtures()
    for name, argv in GOLDEN_RUNS.items():
        out = subprocess.run([sys.executable, "-m", "sfdet", *argv], cwd=HERE, check=True,
                             capture_output=True).stdout
        (HERE / "golden" / name).write_bytes(out)


if __name__ == "__main__":
    main()
