"""Random hyperparameter search, per-trial training, and top-k reporting."""

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .autodiff import Tape
from .cells import ALL_KINDS, CellKind
from .data import make_batches
from .errors import ConfigError, DomainError, UsageError
from .optim import make_optimizer

HIDDEN_RANGES = {"lstm": (50, 300), "gru": (50, 350), "vrnn": (50, 400)}
RESULT_COLUMNS = ("config_id", "arch", "recurrence", "optimizer", "layers", "hidden",
                  "lr", "momentum", "seed", "param_count", "iteration", "split", "nll")
SUMMARY_COLUMNS = ("dataset", "optimizer", "model", "min_test_nll", "mean_param_count",
                   "top_k", "completed", "diverged")
EVAL_SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class SearchSpec:
    kinds: tuple = ALL_KINDS
    optimizer: str = "adam"
    samples: int = 60
    iterations: int = 300
    layer_choices: tuple = (2, 3)
    hidden_ranges: dict = field(default_factory=lambda: dict(HIDDEN_RANGES))
    lr_range: tuple = (1e-4, 1e-2)
    momentum_range: tuple = (0.0, 1.0)
    seed: int = 0
    batch_size: int = 32
    keep_prob: float = 0.9
    loss_mode: str = "full_bernoulli"
    iteration_unit: str = "epoch"
    top_k: int = 6

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if not self.kinds:
            raise ConfigError("no model kinds to sweep")
        if not self.layer_choices:
            raise ConfigError("layer_choices is empty")
        for arch, (lo, hi) in self.hidden_ranges.items():
            if not 1 <= lo <= hi:
                raise ConfigError(f"hidden range for {arch} is empty: {lo}..{hi}")
        lo, hi = self.lr_range
        if not 0 < lo <= hi:
            raise ConfigError(f"learning-rate range must be positive, got {self.lr_range}")
        if self.optimizer not in ("adam", "rmsprop"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.iteration_unit not in ("epoch", "update"):
            raise ConfigError(f"iteration_unit must be 'epoch' or 'update', got {self.iteration_unit!r}")


@dataclass(frozen=True)
class TrialConfig:
    config_id: str
    kind: CellKind
    optimizer: str
    layers: int
    hidden: int
    lr: float
    momentum: float
    seed: int
    batch_size: int = 32
    keep_prob: float = 0.9
    loss_mode: str = "full_bernoulli"
    iteration_unit: str = "epoch"

    def model_config(self, P):
        return M.ModelConfig(self.kind, self.layers, self.hidden, P,
                             self.keep_prob, self.loss_mode)


@dataclass
class TrialRecord:
    config: TrialConfig
    param_count: int
    nll: dict
    seconds: list = field(default_factory=list)
    diverged: bool = False
    rank: int = None
    model: object = field(default=None, repr=False, compare=False)

    @property
    def final_valid(self):
        if self.diverged or not self.nll["valid"]:
            return math.inf
        return self.nll["valid"][-1]


def sample_configs(spec):
    """Draw ``spec.samples`` configurations for every kind, deterministically."""
    configs = []
    for index, kind in enumerate(spec.kinds):
        rng = np.random.default_rng([spec.seed, index])
        lo, hi = spec.hidden_ranges[kind.architecture]
        log_lo, log_hi = np.log10(spec.lr_range)
        for i in range(spec.samples):
            layers = int(rng.choice(spec.layer_choices))
            hidden = int(rng.integers(lo, hi + 1))
            lr = float(10.0 ** rng.uniform(log_lo, log_hi))
            momentum = float(rng.uniform(*spec.momentum_range))
            seed = int(rng.integers(0, 2**31))
            if spec.optimizer != "rmsprop":
                momentum = 0.0
            configs.append(TrialConfig(
                f"{kind}-{spec.optimizer}-{i:03d}", kind, spec.optimizer, layers, hidden,
                lr, momentum, seed, spec.batch_size, spec.keep_prob, spec.loss_mode,
                spec.iteration_unit))
    return configs


def _evaluate_all(model, dataset):
    return {s: M.evaluate(model, dataset.rolls(s)) for s in EVAL_SPLITS}


def train_step(model, batch, optimizer, seed):
    """One optimizer update on one batch; returns the training loss."""
    tape = Tape(seed=seed)
    bound = model.bind(tape)
    loss = M.loss(model, batch, True, tape, bound)
    value = float(loss.value[0, 0])
    if not math.isfinite(value):
        return value
    tape.backward(loss)
    names = [n for n, _ in model.named_params()]
    params = [a for _, a in model.named_params()]
    model.set_params(optimizer.step(params, [bound[n].grad for n in names]))
    return value


def run_trial(config, dataset, iterations, initial_model=None):
    """Train one configuration, evaluating every split after each iteration.

    The trajectory starts with the evaluation of the untrained model, so it
    holds ``iterations + 1`` points unless the trial diverges.
    """
    model = initial_model or M.Model.init(config.model_config(dataset.P), config.seed)
    optimizer = make_optimizer(config.optimizer, config.lr, config.momentum)
    record = TrialRecord(config, model.param_count(), {s: [] for s in EVAL_SPLITS})
    train = dataset.rolls("train")

    def log_eval():
        try:
            scores = _evaluate_all(model, dataset)
        except DomainError:
            return False
        if not all(math.isfinite(v) for v in scores.values()):
            return False
        for s, v in scores.items():
            record.nll[s].append(v)
        return True

    if not log_eval():
        record.diverged = True
        return record
    pending = []
    epoch = 0
    for it in range(1, iterations + 1):
        start = time.perf_counter()
        if config.iteration_unit == "epoch":
            batches = make_batches(train, config.batch_size, seed=[config.seed, it])
        else:
            if not pending:
                epoch += 1
                pending = make_batches(train, config.batch_size, seed=[config.seed, epoch])
            batches = [pending.pop(0)]
        finite = True
        for b, batch in enumerate(batches):
            try:
                value = train_step(model, batch, optimizer, [config.seed, it, b])
            except DomainError:
                value = math.nan
            if not math.isfinite(value):
                finite = False
                break
        if not finite or not log_eval():
            record.diverged = True
            break
        record.seconds.append(time.perf_counter() - start)
    record.model = model
    return record


@dataclass
class Report:
    selected: list
    mean_test_curve: np.ndarray
    final_test: list
    min_test: float
    mean_param_count: float
    completed: int
    diverged: int


def rank_records(records):
    """Assign ranks in place by final validation NLL (diverged trials last)."""
    ordered = sorted(records, key=lambda r: (r.final_valid, r.config.config_id))
    for i, r in enumerate(ordered, start=1):
        r.rank = i
    return ordered


def rank_and_report(records, k=6):
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if len(records) < k:
        raise UsageError(f"need at least {k} records to report the top {k}, got {len(records)}")
    top = rank_records(records)[:k]
    length = max(len(r.nll["test"]) for r in top)
    curves = np.full((k, length), np.nan)
    for i, r in enumerate(top):
        curves[i, :len(r.nll["test"])] = r.nll["test"]
    with np.errstate(invalid="ignore"):
        mean_curve = np.nanmean(curves, axis=0) if length else np.array([])
    finals = [r.nll["test"][-1] if r.nll["test"] else math.nan for r in top]
    observed = [v for r in top for v in r.nll["test"]]
    diverged = sum(r.diverged for r in records)
    return Report(top, mean_curve, finals, min(observed) if observed else math.nan,
                  float(np.mean([r.param_count for r in top])),
                  len(records) - diverged, diverged)


# -- parallel search -----------------------------------------------------------

_WORKER_DATASET = None


def _init_worker(dataset):
    global _WORKER_DATASET
    _WORKER_DATASET = dataset


def _run_in_worker(args):
    config, iterations = args
    record = run_trial(config, _WORKER_DATASET, iterations)
    model, record.model = record.model, None
    return record, model


def run_search(spec, dataset, workers=1, on_trial=None):
    """Run every sampled configuration; results come back in sampling order.

    ``on_trial(record, model)`` is called as each trial finishes (in sampling
    order), e.g. to write a checkpoint.
    """
    configs = sample_configs(spec)
    jobs = [(c, spec.iterations) for c in configs]
    records = []
    if workers <= 1:
        _init_worker(dataset)
        results = map(_run_in_worker, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dataset,))
        results = pool.map(_run_in_worker, jobs)
    try:
        for record, model in results:
            if on_trial is not None:
                on_trial(record, model)
            records.append(record)
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def summarize(records, dataset_name, k=6):
    """One summary row per (optimizer, model kind)."""
    groups = {}
    for r in records:
        groups.setdefault((r.config.optimizer, str(r.config.kind)), []).append(r)
    rows = []
    for (opt, kind), group in sorted(groups.items()):
        report = rank_and_report(group, min(k, len(group)))
        rows.append({"dataset": dataset_name, "optimizer": opt, "model": kind,
                     "min_test_nll": report.min_test,
                     "mean_param_count": report.mean_param_count,
                     "top_k": len(report.selected), "completed": report.completed,
                     "diverged": report.diverged})
    return rows


# -- CSV I/O -------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_results(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            c = r.config
            momentum = _fmt(c.momentum) if c.optimizer == "rmsprop" else ""
            fixed = [c.config_id, c.kind.architecture, c.kind.recurrence, c.optimizer,
                     c.layers, c.hidden, _fmt(c.lr), momentum, c.seed, r.param_count]
            for it in range(len(r.nll["test"])):
                for split in EVAL_SPLITS:
                    w.writerow(fixed + [it, split, _fmt(r.nll[split][it])])


def read_results(path, iterations=None):
    """Rebuild TrialRecords from a results CSV.

    A trial whose trajectory is shorter than the longest one (or than
    ``iterations + 1`` when given) is marked diverged.
    """
    by_id = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise UsageError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            cid = row["config_id"]
            if cid not in by_id:
                config = TrialConfig(
                    cid, CellKind(row["arch"], row["recurrence"]), row["optimizer"],
                    int(row["layers"]), int(row["hidden"]), float(row["lr"]),
                    float(row["momentum"] or 0.0), int(row["seed"]))
                by_id[cid] = TrialRecord(config, int(row["param_count"]),
                                         {s: [] for s in EVAL_SPLITS})
            by_id[cid].nll[row["split"]].append(float(row["nll"]))
    records = list(by_id.values())
    expected = (iterations + 1) if iterations is not None else max(
        (len(r.nll["test"]) for r in records), default=0)
    for r in records:
        r.diverged = len(r.nll["test"]) < expected
    return records


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
