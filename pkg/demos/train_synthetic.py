"""Train a small model on synthetic motion and compare it with the baselines.

Sixteen sequences are used for training and four are held out. The network
here is sized for 24 channels (8 joints) and trains in a few minutes on one
core; pass a number of epochs as the first argument to change the budget.

    python3 demos/train_synthetic.py [epochs]
"""
import sys
import time

from fsgn.data import SynthSpec, make_windows, synthetic_corpus
from fsgn.evaluation import (constant_velocity_predictor, evaluate, format_table, fsgn_predictor,
                             zero_velocity_predictor)
from fsgn.model import ModelConfig, param_count
from fsgn.training import TrainConfig, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
seqs = synthetic_corpus(20, SynthSpec(v=8, fps=25, T=200, n_harmonics=3), seed=0)
train_ws = [w for s in seqs[:16] for w in make_windows(s, 50, 25)]
test_ws = [w for s in seqs[16:] for w in make_windows(s, 50, 25, stride=5)]
print(f"{len(train_ws)} training windows, {len(test_ws)} test windows")

cfg = ModelConfig(k=24)
t0 = time.perf_counter()
params, curve = train(train_ws, cfg, TrainConfig(epochs=epochs, batch_size=32))
print(f"{len(curve)} steps in {time.perf_counter() - t0:.0f}s")
for row in curve[:: max(1, len(curve) // 8)]:
    print(f"  step {row['step']:5d}  loss {row['loss_total']:9.2f}  (p {row['loss_p']:.2f})")

# the network forecasts 10 frames per pass; 25 frames take three chained passes
horizons = (80, 400, 1000)
reports = [
    evaluate(fsgn_predictor(params, cfg), test_ws, 25, horizons, "FSGN", param_count(cfg)),
    evaluate(zero_velocity_predictor, test_ws, 25, horizons, "zero-velocity"),
    evaluate(constant_velocity_predictor, test_ws, 25, horizons, "constant-velocity"),
]
print()
print(format_table(reports))
