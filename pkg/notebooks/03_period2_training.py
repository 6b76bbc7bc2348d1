"""
Learning a two-chord loop
=========================

Train full and diagonal vanilla RNNs on a synthetic dataset where chords
alternate, so the next frame is fully determined by the current one and the
best achievable NLL is zero.
"""

import math

from diagrnn import data, harness
from diagrnn.cells import CellKind

P = 4
ds = data.split_long(data.prune_pitches(data.synthetic_period2(P=P, n_sequences=20)))
print("uniform-guess NLL per frame:", P * math.log(2))

for recurrence in ("full", "diag"):
    config = harness.TrialConfig(f"vrnn-{recurrence}", CellKind("vrnn", recurrence), "adam",
                                 layers=1, hidden=16, lr=3e-3, momentum=0.0, seed=0)
    record = harness.run_trial(config, ds, iterations=300)
    curve = record.nll["train"]
    print(f"{config.config_id}: {record.param_count} params, NLL "
          + " -> ".join(f"{curve[i]:.3f}" for i in (0, 10, 50, 100, 300)))
