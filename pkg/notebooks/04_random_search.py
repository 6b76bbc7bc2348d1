"""
A miniature hyperparameter search
=================================

Sample a handful of configurations per model kind, train each briefly, and
report the top configurations by final validation NLL.  The full protocol
uses 60 samples and 300 iterations; here both are cut down so the script
finishes in well under a minute.
"""

import numpy as np

from diagrnn import data, harness
from diagrnn.cells import ALL_KINDS

rng = np.random.default_rng(0)
raw = data.RawDataset("toy", 24, {
    split: [[tuple(np.flatnonzero(rng.random(24) < 0.15)) for _ in range(30)]
            for _ in range(8)]
    for split in data.SPLITS})
ds = data.split_long(data.prune_pitches(raw))

spec = harness.SearchSpec(kinds=ALL_KINDS, samples=3, iterations=3, seed=1, top_k=2,
                          hidden_ranges={"vrnn": (8, 32), "gru": (8, 32), "lstm": (8, 32)})
records = harness.run_search(spec, ds, workers=2)

for row in harness.summarize(records, ds.name, k=spec.top_k):
    print(f"{row['model']:10s} min test NLL {row['min_test_nll']:.3f}  "
          f"mean params {row['mean_param_count']:.0f}")

report = harness.rank_and_report([r for r in records if str(r.config.kind) == "gru-diag"], k=2)
print("gru-diag mean test curve over the top 2:", np.round(report.mean_test_curve, 3))
