"""Climb the ablation ladder from a bare baseline to the full model.

Each row adds one component to the row above it. Run with
``python demos/ablation_ladder.py [seed]``; expect a few minutes at the default size.
"""

import sys

from waml.ablation import format_table, ladder, run_ladder
from waml.synthetic import SynthConfig, generate
from waml.trainer import TrainConfig

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
ds = generate(SynthConfig(seed=seed))
rows = ladder(dim=32, train=TrainConfig(learning_rate=1e-3))


def show(r):
    print(f"  {r.name:16s} recall {r.recall_ground_truth:.4f}  best epoch {r.best_epoch:3d}  {r.seconds:5.1f} s",
          flush=True)


results = run_ladder(ds, rows, seed=seed, log=show)
print()
print(format_table(results), end="")
