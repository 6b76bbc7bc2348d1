"""Stacked recurrent network with a sigmoid output head over piano-roll frames."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cells
from .autodiff import (Tape, add, dropout, matmul, row_nll, sigmoid,
                       weighted_bernoulli_nll)
from .cells import CellKind
from .errors import ConfigError, DimensionError, ParseError, UsageError

LOSS_MODES = ("full_bernoulli", "positive_only")


@dataclass(frozen=True)
class ModelConfig:
    cell_kind: CellKind
    num_layers: int
    hidden_units: int
    input_size: int
    keep_prob: float = 0.9
    loss_mode: str = "full_bernoulli"

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_units < 1 or self.input_size < 1:
            raise ConfigError("hidden_units and input_size must be >= 1")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must lie in (0, 1], got {self.keep_prob}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")

    def layer_input(self, index):
        return self.input_size if index == 0 else self.hidden_units


@dataclass
class Batch:
    """Padded next-frame batch.

    ``inputs`` and ``targets`` are ``(T, B, P)``; ``mask`` is ``(T, B)`` and is 1
    exactly where ``targets`` holds a real frame.
    """

    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_rolls(cls, rolls):
        """Build from dense ``(T_i, P)`` binary arrays, one per sequence."""
        if not rolls:
            raise UsageError("cannot batch zero sequences")
        P = rolls[0].shape[1]
        T = max(len(r) for r in rolls) - 1
        if T < 1:
            raise UsageError("every sequence in the batch has fewer than 2 frames")
        B = len(rolls)
        inputs = np.zeros((T, B, P))
        targets = np.zeros((T, B, P))
        mask = np.zeros((T, B))
        for b, roll in enumerate(rolls):
            if roll.shape[1] != P:
                raise DimensionError(f"sequence {b} has {roll.shape[1]} pitches, expected {P}")
            n = len(roll) - 1
            if n < 1:
                continue
            inputs[:n, b] = roll[:-1]
            targets[:n, b] = roll[1:]
            mask[:n, b] = 1.0
        return cls(inputs, targets, mask)

    @property
    def size(self):
        return self.inputs.shape[1]

    @property
    def frames(self):
        return int(self.mask.sum())


@dataclass
class Model:
    config: ModelConfig
    layers: list
    V: np.ndarray
    b_out: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def init(cls, config, seed):
        rng = np.random.default_rng(seed)
        layer_seeds = rng.integers(0, 2**63, size=config.num_layers)
        layers = [cells.init_params(config.cell_kind, config.hidden_units,
                                    config.layer_input(i), int(s))
                  for i, s in enumerate(layer_seeds)]
        K, P = config.hidden_units, config.input_size
        bound = np.sqrt(6.0 / (K + P))
        V = rng.uniform(-bound, bound, size=(K, P))
        return cls(config, layers, V, np.zeros((1, P)))

    @classmethod
    def zeros(cls, config):
        model = cls.init(config, 0)
        for name, arr in model.named_params():
            arr[...] = 0.0
        return model

    def named_params(self):
        """``[(name, array), ...]`` in a fixed order; arrays are live views."""
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"layer{i}.{k}", v) for k, v in layer.items())
        out.append(("out.V", self.V))
        out.append(("out.b", self.b_out))
        return out

    def param_count(self):
        return sum(a.size for _, a in self.named_params())

    def set_params(self, arrays):
        arrays = list(arrays)
        names = [n for n, _ in self.named_params()]
        if len(arrays) != len(names):
            raise UsageError(f"expected {len(names)} arrays, got {len(arrays)}")
        for i, layer in enumerate(self.layers):
            for k in layer:
                layer[k] = arrays[names.index(f"layer{i}.{k}")]
        self.V = arrays[-2]
        self.b_out = arrays[-1]

    def bind(self, tape):
        """Register every parameter as a tape leaf; returns ``{name: node}``."""
        return {name: tape.leaf(arr, name=name) for name, arr in self.named_params()}


def expected_param_count(config):
    K, P = config.hidden_units, config.input_size
    layers = sum(cells.param_count(config.cell_kind, K, config.layer_input(i))
                 for i in range(config.num_layers))
    return layers + K * P + P


def forward(model, batch, training, tape, bound=None):
    """Teacher-forced pass; returns one ``B x P`` prediction node per step.

    Dropout sits on the input of every layer and on the last layer's output.
    """
    cfg = model.config
    T, B, P = batch.inputs.shape
    if P != cfg.input_size:
        raise DimensionError(f"batch has {P} pitches, model expects {cfg.input_size}")
    nodes = bound if bound is not None else model.bind(tape)
    layer_nodes = [{k: nodes[f"layer{i}.{k}"] for k in layer}
                   for i, layer in enumerate(model.layers)]
    kind, K, kp = cfg.cell_kind, cfg.hidden_units, cfg.keep_prob
    states = [cells.zero_state(kind, K, tape, B) for _ in model.layers]
    preds = []
    for t in range(T):
        h = dropout(tape.const(batch.inputs[t]), kp, training)
        for i, params in enumerate(layer_nodes):
            states[i] = cells.step(kind, params, states[i], h)
            h = dropout(states[i].h, kp, training)
        preds.append(sigmoid(add(matmul(h, nodes["out.V"]), nodes["out.b"])))
    return preds


def _sequence_weights(mask):
    frames = mask.sum(axis=0)
    live = frames > 0
    if not live.any():
        raise UsageError("batch contains no target frames")
    per_seq = np.where(live, 1.0 / np.where(live, frames, 1.0), 0.0) / live.sum()
    return mask * per_seq


def loss(model, batch, training, tape, bound=None):
    """Per-frame NLL of each sequence, averaged over sequences, as a 1x1 node."""
    preds = forward(model, batch, training, tape, bound)
    weights = _sequence_weights(batch.mask)
    positive_only = model.config.loss_mode == "positive_only"
    total = None
    for t, p in enumerate(preds):
        term = weighted_bernoulli_nll(batch.targets[t], p, weights[t], positive_only)
        total = term if total is None else add(total, term)
    return total


def sequence_nlls(model, batch):
    """Eval-mode per-frame NLL for each sequence in the batch (NaN if it has no targets)."""
    tape = Tape(grad=False)
    preds = forward(model, batch, False, tape)
    positive_only = model.config.loss_mode == "positive_only"
    sums = np.zeros(batch.size)
    for t, p in enumerate(preds):
        sums += batch.mask[t] * row_nll(batch.targets[t], p.value, positive_only)
    frames = batch.mask.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(frames > 0, sums / frames, np.nan)


def evaluate(model, rolls, batch_size=32):
    """Mean per-frame NLL over every sequence with at least one target frame."""
    rolls = [r for r in rolls if len(r) >= 2]
    if not rolls:
        raise UsageError("cannot evaluate on an empty split")
    # length-sorted batches keep padding small; the mean does not depend on order
    order = sorted(range(len(rolls)), key=lambda i: len(rolls[i]))
    total = 0.0
    for start in range(0, len(order), batch_size):
        chunk = [rolls[i] for i in order[start:start + batch_size]]
        total += sequence_nlls(model, Batch.from_rolls(chunk)).sum()
    return float(total / len(rolls))


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"DIAGRNN-CHECKPOINT 1\n"
_HEADER_KEYS = ("cell", "layers", "hidden", "input_size", "keep_prob", "loss")


def save_checkpoint(model, path):
    cfg = model.config
    header = {
        "cell": str(cfg.cell_kind),
        "layers": str(cfg.num_layers),
        "hidden": str(cfg.hidden_units),
        "input_size": str(cfg.input_size),
        "keep_prob": repr(float(cfg.keep_prob)),
        "loss": cfg.loss_mode,
    }
    header.update({k: str(v) for k, v in model.meta.items()})
    params = model.named_params()
    header["tensors"] = str(len(params))
    chunks = [MAGIC]
    chunks += [f"{k}={v}\n".encode() for k, v in header.items()]
    chunks.append(b"\n")
    for name, arr in params:
        chunks.append(f"{name} {arr.shape[0]} {arr.shape[1]}\n".encode())
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ParseError(f"{path}: not a diagrnn checkpoint")
    pos = len(MAGIC)
    header = {}
    while True:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode()
        pos = end + 1
        if not line:
            break
        key, _, value = line.partition("=")
        header[key] = value
    missing = [k for k in _HEADER_KEYS + ("tensors",) if k not in header]
    if missing:
        raise ParseError(f"{path}: header lacks {', '.join(missing)}")
    config = ModelConfig(CellKind.parse(header["cell"]), int(header["layers"]),
                         int(header["hidden"]), int(header["input_size"]),
                         float(header["keep_prob"]), header["loss"])
    model = Model.init(config, 0)
    expected = model.named_params()
    if int(header["tensors"]) != len(expected):
        raise ParseError(f"{path}: {header['tensors']} tensors, expected {len(expected)}")
    arrays = []
    for name, ref in expected:
        end = raw.index(b"\n", pos)
        rec_name, rows, cols = raw[pos:end].decode().split()
        pos = end + 1
        shape = (int(rows), int(cols))
        if rec_name != name or shape != ref.shape:
            raise ParseError(f"{path}: tensor record {rec_name} {shape} does not match "
                             f"{name} {ref.shape}")
        n = shape[0] * shape[1] * 8
        arrays.append(np.frombuffer(raw[pos:pos + n], dtype="<f8").reshape(shape).copy())
        pos += n
    model.set_params(arrays)
    model.meta = {k: v for k, v in header.items() if k not in _HEADER_KEYS + ("tensors",)}
    return model
