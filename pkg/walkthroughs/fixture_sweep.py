r"""
A small offline sweep
=====================

Chunk size, overlap and metric are varied over the bundled corpus with the
hashed embedder and the extractive reference generator. Nothing leaves the
machine, so the CSV is identical from run to run.
"""

import tempfile
from pathlib import Path

from ragqa.bench import SweepConfig, run_sweep

config = SweepConfig.from_dict({
    "grid": {"chunk_size": [100, 200, 400], "overlap": [0.0, 0.1], "metric": ["cosine", "pairwise"]},
})

with tempfile.TemporaryDirectory() as tmp:
    outcome = run_sweep(config, tmp)
    print(Path(outcome.files["markdown"]).read_text())
