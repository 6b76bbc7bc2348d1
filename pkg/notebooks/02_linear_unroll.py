"""
Powers of the recurrent matrix
==============================

Without the nonlinearity a vanilla RNN is a sum of inputs weighted by powers
of the recurrent matrix.  For a diagonal recurrence those powers are just
elementwise powers of a vector, so each hidden unit keeps its own decay rate.
"""

import numpy as np

from diagrnn import CellKind, init_params, step
from diagrnn.autodiff import Tape, identity
from diagrnn.cells import zero_state

rng = np.random.default_rng(3)
K, L, T = 4, 2, 8
xs = rng.normal(size=(T, 1, L))

for recurrence in ("full", "diag"):
    kind = CellKind("vrnn", recurrence)
    params = init_params(kind, K, L, seed=0)
    tape = Tape(grad=False)
    leaves = {k: tape.const(v) for k, v in params.items()}
    state = zero_state(kind, K, tape)
    for x in xs:
        state = step(kind, leaves, state, tape.const(x), activation=identity)

    W, U = params["W"], params["U"]
    if recurrence == "full":
        closed = sum(xs[k] @ U @ np.linalg.matrix_power(W, T - 1 - k) for k in range(T))
    else:
        closed = sum((xs[k] @ U) * W ** (T - 1 - k) for k in range(T))
    print(recurrence, "recursion ", np.round(state.h.value, 6))
    print(recurrence, "closed form", np.round(closed, 6))

# How fast does each input fade?  The weight on an input k steps back is W^k.
W = init_params(CellKind("vrnn", "diag"), K, L, seed=0)["W"]
for lag in (1, 2, 4, 8):
    print(f"lag {lag}: per-unit weight", np.round(W[0] ** lag, 4))
