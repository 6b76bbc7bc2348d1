"""Recurrent networks with full or diagonal recurrent matrices.

Vanilla RNN, GRU and LSTM cells built on a small taped autodiff engine,
plus the piano-roll data pipeline, optimizers and random-search harness
used to compare full and diagonal recurrence on symbolic music.
"""

__version__ = "0.1.0"

from .cells import ALL_KINDS, CellKind, init_params, param_count, step
from .model import Batch, Model, ModelConfig, evaluate, forward, loss

__all__ = ["ALL_KINDS", "Batch", "CellKind", "Model", "ModelConfig", "evaluate",
           "forward", "init_params", "loss", "param_count", "step"]
