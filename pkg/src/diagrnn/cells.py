"""Vanilla RNN, GRU and LSTM cells with full or diagonal recurrence.

States and inputs are row vectors (one row per sequence in the batch), so a
full recurrent matrix is applied as ``h @ W`` and an input matrix as
``x @ U`` with ``U`` stored ``L x K``.  A diagonal cell stores each recurrent
factor as a ``1 x K`` row and applies it elementwise.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import add, hadamard, matmul, one_minus, sigmoid, tanh_op
from .errors import ConfigError, DimensionError

ARCHITECTURES = ("vrnn", "gru", "lstm")
RECURRENCES = ("full", "diag")

# gate prefixes per architecture; "" is the candidate / plain recursion
_GATES = {"vrnn": ("",), "gru": ("f", "w", ""), "lstm": ("f", "w", "o", "")}


@dataclass(frozen=True)
class CellKind:
    architecture: str
    recurrence: str

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.recurrence not in RECURRENCES:
            raise ConfigError(f"unknown recurrence {self.recurrence!r}")

    @classmethod
    def parse(cls, text):
        """``'lstm-diag'`` -> ``CellKind('lstm', 'diag')``."""
        try:
            arch, rec = text.lower().split("-")
        except ValueError:
            raise ConfigError(f"cell kind must look like 'gru-full', got {text!r}") from None
        return cls(arch, rec)

    @property
    def diagonal(self):
        return self.recurrence == "diag"

    @property
    def gates(self):
        return _GATES[self.architecture]

    def __str__(self):
        return f"{self.architecture}-{self.recurrence}"


ALL_KINDS = tuple(CellKind(a, r) for a in ARCHITECTURES for r in RECURRENCES)


def _suffix(gate):
    return f"_{gate}" if gate else ""


def param_shapes(kind, K, L):
    """Ordered ``{name: (rows, cols)}`` for one layer."""
    shapes = {}
    for gate in kind.gates:
        s = _suffix(gate)
        shapes["W" + s] = (1, K) if kind.diagonal else (K, K)
        shapes["U" + s] = (L, K)
        shapes["b" + s] = (1, K)
    return shapes


def init_params(kind, K, L, seed):
    """Xavier-uniform weights, zero biases.

    A diagonal recurrent vector is treated as a K -> K map, so its bound is
    ``sqrt(3 / K)``, the same as a full K x K matrix.
    """
    if K < 1 or L < 1:
        raise ConfigError(f"hidden and input sizes must be >= 1, got K={K}, L={L}")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(kind, K, L).items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
            continue
        fan_in, fan_out = (K, K) if name.startswith("W") else (L, K)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def param_count(kind, K, L):
    if K < 1 or L < 1:
        raise ConfigError(f"hidden and input sizes must be >= 1, got K={K}, L={L}")
    n = len(kind.gates)
    recurrent = K if kind.diagonal else K * K
    return n * (recurrent + K * L + K)


@dataclass
class CellState:
    h: object
    h_prime: object = None


def zero_state(kind, K, tape, batch=1):
    h = tape.const(np.zeros((batch, K)))
    if kind.architecture == "lstm":
        return CellState(h, tape.const(np.zeros((batch, K))))
    return CellState(h)


def _recur(kind, W, h):
    return hadamard(h, W) if kind.diagonal else matmul(h, W)


def _preact(kind, p, gate, h, x):
    s = _suffix(gate)
    return add(add(_recur(kind, p["W" + s], h), matmul(x, p["U" + s])), p["b" + s])


def step(kind, params, state, x, gates=None, activation=tanh_op):
    """Advance one time step.

    ``params`` maps names to tape nodes (see :func:`param_shapes`).
    ``gates`` optionally pins gate activations, e.g. ``{"f": 0.0, "w": 1.0}``;
    it exists for tests and is never set on the training path.
    ``activation`` replaces tanh in the vanilla recursion only.
    """
    h = state.h
    K = h.shape[1]
    if x.shape[1] != params["U"].shape[0] or params["U"].shape[1] != K:
        raise DimensionError(
            f"{kind}: input {x.shape[0]}x{x.shape[1]} does not fit U "
            f"{params['U'].shape[0]}x{params['U'].shape[1]} with state width {K}")
    gates = gates or {}

    def gate(name):
        if name in gates:
            return h.tape.const(np.broadcast_to(gates[name], h.shape))
        return sigmoid(_preact(kind, params, name, h, x))

    if kind.architecture == "vrnn":
        return CellState(activation(_preact(kind, params, "", h, x)))

    if kind.architecture == "gru":
        f = gate("f")
        w = gate("w")
        c = tanh_op(_preact(kind, params, "", hadamard(h, w), x))
        return CellState(add(hadamard(h, f), hadamard(one_minus(f), c)))

    f = gate("f")
    w = gate("w")
    o = gate("o")
    c = tanh_op(_preact(kind, params, "", h, x))
    h_prime = add(hadamard(state.h_prime, f), hadamard(w, c))
    return CellState(hadamard(o, tanh_op(h_prime)), h_prime)
