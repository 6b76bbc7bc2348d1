"""
Full and diagonal cells, side by side
=====================================

Build every cell kind, count its parameters, and check backpropagation
through time against central finite differences.
"""

import numpy as np

from diagrnn import ALL_KINDS, CellKind, Model, ModelConfig, param_count
from diagrnn.autodiff import Tape
from diagrnn.model import Batch, loss

# Parameter counts for a layer with K hidden units and L = 88 inputs.
# The diagonal kinds grow linearly in K, the full ones quadratically.
for kind in ALL_KINDS:
    counts = [param_count(kind, K, 88) for K in (50, 100, 200, 400)]
    print(f"{str(kind):10s}", counts)

# A diagonal recurrence is a diagonal matrix in disguise: put w on the
# diagonal of a full cell and the two produce the same states.
rng = np.random.default_rng(0)
w = rng.uniform(-1, 1, size=(1, 3))
print("diag(w) =\n", np.diag(w[0]))

# Gradient check on a small two-layer LSTM-Diag with the sigmoid head.
model = Model.init(ModelConfig(CellKind("lstm", "diag"), 2, 6, 4, keep_prob=1.0), seed=1)
rolls = [(rng.random((6, 4)) < 0.5).astype(float) for _ in range(2)]
batch = Batch.from_rolls(rolls)

tape = Tape(seed=0)
bound = model.bind(tape)
tape.backward(loss(model, batch, True, tape, bound))


def value():
    return loss(model, batch, False, Tape(grad=False)).value[0, 0]


for name, arr in model.named_params()[:4]:
    idx = (0, 0)
    old = arr[idx]
    arr[idx] = old + 1e-5
    up = value()
    arr[idx] = old - 1e-5
    down = value()
    arr[idx] = old
    print(f"{name:12s} analytic {bound[name].grad[idx]: .8f}  numeric {(up - down) / 2e-5: .8f}")
