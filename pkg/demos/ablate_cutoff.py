"""Sweep the frequency cutoff and the residual output on synthetic data.

Each grid point trains a fresh model with the same seed and data, so the
only thing that changes between rows is the configuration. The tight
cutoff hurts even after one epoch. Predicting displacement overtakes
predicting absolute positions only with a longer budget: at 20 epochs it
is ahead at the final horizon, while after one epoch it is still behind.

    python3 demos/ablate_cutoff.py [epochs]
"""
import sys

from fsgn.data import SynthSpec, make_windows, synthetic_corpus
from fsgn.evaluation import format_table, run_ablation
from fsgn.model import ModelConfig
from fsgn.training import TrainConfig

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 3
seqs = synthetic_corpus(20, SynthSpec(v=8), seed=0)
train_ws = [w for s in seqs[:16] for w in make_windows(s, 50, 25)]
test_ws = [w for s in seqs[16:] for w in make_windows(s, 50, 25, stride=5)]
tc = TrainConfig(epochs=epochs, batch_size=32)


def show(report):
    print(f"  done: {report.predictor}", flush=True)


for axis, grid in (("lambda", [0.8, 0.2]), ("displacement", ["absolute", "relative"])):
    print(f"axis {axis}")
    reports = run_ablation(axis, grid, ModelConfig(k=24), train_ws, test_ws, 25, (400, 1000), tc, on_report=show)
    print(format_table(reports))
    print()
