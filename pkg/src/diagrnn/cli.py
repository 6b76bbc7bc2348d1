"""Command-line entry point: ``diagrnn {convert,train,eval,search,report}``.

Exit codes: 0 success, 1 validation or data error, 2 usage error.
"""

import argparse
import json
import logging
import pickle
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, data, harness
from . import model as M
from .cells import ALL_KINDS
from .errors import DiagRNNError, UsageError

log = logging.getLogger("diagrnn")

LOSS_FLAGS = {"bernoulli": "full_bernoulli", "positive-only": "positive_only"}


def _common(p):
    p.add_argument("--dataset", help="interchange-format dataset (.txt or .txt.gz)")
    p.add_argument("--cell", choices=("vrnn", "lstm", "gru"), action="append",
                   help="architecture (repeatable for search; default: all)")
    p.add_argument("--recurrence", choices=("full", "diag"), action="append",
                   help="recurrence type (repeatable for search; default: both)")
    p.add_argument("--optimizer", choices=("adam", "rmsprop"), default="adam")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--keep-prob", type=float, default=0.9)
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--iteration-unit", choices=("epoch", "update"), default="epoch")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-len", type=int, default=200)
    p.add_argument("--samples", type=int, default=60)
    p.add_argument("--top-k", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.add_argument("--loss", choices=tuple(LOSS_FLAGS), default="bernoulli")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diagrnn",
        description="Full and diagonal recurrent networks for piano-roll modeling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("convert", help="turn a piano-roll dump into the interchange format")
    p.add_argument("--input", required=True,
                   help=".pickle/.pkl (published piano-rolls), .json, or interchange file")
    p.add_argument("--out", required=True, help="output file (.txt or .txt.gz)")
    p.add_argument("--name", help="dataset name (default: input file stem)")
    p.add_argument("--num-pitches", type=int, default=128)

    p = sub.add_parser("train", help="train a single configuration")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset")
    p.add_argument("--split", choices=data.SPLITS, default="test")
    p.add_argument("--max-len", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("search", help="random hyperparameter search with top-k report")
    _common(p)

    p = sub.add_parser("report", help="re-derive summary.csv from a results.csv")
    p.add_argument("--results", help="results CSV (default: OUT/results.csv)")
    p.add_argument("--out", help="run directory holding results.csv and manifest.txt")
    p.add_argument("--top-k", type=int, default=6)
    p.add_argument("--dataset-name", help="dataset label (default: from manifest)")
    return parser


def _require(args, *names):
    for name in names:
        if getattr(args, name.lstrip("-").replace("-", "_")) is None:
            raise UsageError(f"{args.command}: {name} is required")


def _kinds(args):
    archs = args.cell or ["vrnn", "lstm", "gru"]
    recs = args.recurrence or ["full", "diag"]
    return tuple(k for k in ALL_KINDS if k.architecture in archs and k.recurrence in recs)


def _write_manifest(out, entries):
    lines = [f"{k}={v}" for k, v in entries]
    lines += [f"version.diagrnn={__version__}", f"version.numpy={np.__version__}",
              f"version.python={platform.python_version()}"]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _open_run_dir(path):
    out = Path(path)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return out, handler


def _dataset_entries(args, ds):
    return [("dataset", args.dataset), ("dataset.name", ds.name), ("dataset.pitches", ds.P),
            ("max_len", args.max_len)] + [
        (f"dataset.{s}.sequences", len(ds.splits[s])) for s in data.SPLITS]


def _checkpoint_writer(out, ds):
    pitches = ",".join(str(p) for p in ds.pitch_map)

    def write(record, model):
        if model is None:
            return
        model.meta = {"config_id": record.config.config_id, "dataset": ds.name,
                      "pitches": pitches}
        M.save_checkpoint(model, out / "checkpoints" / f"{record.config.config_id}.bin")
        log.info("finished %s diverged=%s", record.config.config_id, record.diverged)

    return write


def cmd_convert(args):
    src = Path(args.input)
    if not src.exists():
        raise UsageError(f"convert: --input {src} does not exist")
    name = args.name or src.name.split(".")[0].replace(" ", "_")
    if src.suffix in (".pickle", ".pkl"):
        with open(src, "rb") as fh:
            raw = data.from_nested(name, pickle.load(fh), args.num_pitches)
    elif src.suffix == ".json":
        raw = data.from_nested(name, json.loads(src.read_text()), args.num_pitches)
    else:
        raw = data.load(src)
    data.dump(raw, args.out)
    report = raw.report()
    for s in data.SPLITS:
        flag = "  (empty)" if s in report["empty_splits"] else ""
        print(f"{s}: {report['sequences'][s]} sequences, {report['frames'][s]} frames{flag}")
    return 0


def cmd_train(args):
    _require(args, "--dataset", "--out")
    kinds = _kinds(args)
    if len(kinds) != 1:
        raise UsageError("train: give exactly one --cell and one --recurrence")
    ds = data.prepare(args.dataset, args.max_len)
    config = harness.TrialConfig(
        "train", kinds[0], args.optimizer, args.layers, args.hidden, args.lr,
        args.momentum if args.optimizer == "rmsprop" else 0.0, args.seed,
        args.batch_size, args.keep_prob, LOSS_FLAGS[args.loss], args.iteration_unit)
    config.model_config(ds.P)
    out, handler = _open_run_dir(args.out)
    try:
        _write_manifest(out, [("command", "train"), ("cell", kinds[0]),
                              ("optimizer", args.optimizer), ("layers", args.layers),
                              ("hidden", args.hidden), ("lr", repr(args.lr)),
                              ("momentum", repr(config.momentum)),
                              ("keep_prob", repr(args.keep_prob)),
                              ("iterations", args.iterations),
                              ("iteration_unit", args.iteration_unit),
                              ("batch_size", args.batch_size), ("seed", args.seed),
                              ("loss", config.loss_mode)] + _dataset_entries(args, ds))
        log.info("training %s on %s", kinds[0], ds.name)
        record = harness.run_trial(config, ds, args.iterations)
        _checkpoint_writer(out, ds)(record, record.model)
        harness.write_results([record], out / "results.csv")
        harness.write_summary(harness.summarize([record], ds.name, 1), out / "summary.csv")
    finally:
        log.removeHandler(handler)
        handler.close()
    final = {s: v[-1] for s, v in record.nll.items() if v}
    print(" ".join(f"{s}={v:.4f}" for s, v in final.items())
          + ("  (diverged)" if record.diverged else ""))
    return 0


def cmd_eval(args):
    _require(args, "--dataset")
    model = M.load_checkpoint(args.checkpoint)
    ds = data.prepare(args.dataset, args.max_len)
    pitches = model.meta.get("pitches")
    if pitches is not None and pitches != ",".join(str(p) for p in ds.pitch_map):
        raise UsageError("eval: dataset pitch set differs from the one the checkpoint was trained on")
    print(f"{args.split} nll={M.evaluate(model, ds.rolls(args.split), args.batch_size)!r}")
    return 0


def cmd_search(args):
    _require(args, "--dataset", "--out")
    if args.workers < 1:
        raise UsageError("search: --workers must be >= 1")
    spec = harness.SearchSpec(
        kinds=_kinds(args), optimizer=args.optimizer, samples=args.samples,
        iterations=args.iterations, seed=args.seed, batch_size=args.batch_size,
        keep_prob=args.keep_prob, loss_mode=LOSS_FLAGS[args.loss],
        iteration_unit=args.iteration_unit, top_k=args.top_k)
    ds = data.prepare(args.dataset, args.max_len)
    out, handler = _open_run_dir(args.out)
    try:
        _write_manifest(out, [("command", "search"),
                              ("kinds", ",".join(str(k) for k in spec.kinds)),
                              ("optimizer", spec.optimizer), ("samples", spec.samples),
                              ("iterations", spec.iterations),
                              ("iteration_unit", spec.iteration_unit),
                              ("layer_choices", ",".join(map(str, spec.layer_choices))),
                              ("hidden_ranges", ",".join(
                                  f"{a}:{lo}-{hi}" for a, (lo, hi) in spec.hidden_ranges.items())),
                              ("lr_range", ",".join(map(repr, spec.lr_range))),
                              ("momentum_range", ",".join(map(repr, spec.momentum_range))),
                              ("seed", spec.seed), ("batch_size", spec.batch_size),
                              ("keep_prob", repr(spec.keep_prob)), ("loss", spec.loss_mode),
                              ("top_k", spec.top_k)] + _dataset_entries(args, ds))
        log.info("search over %d configurations with %d workers",
                 spec.samples * len(spec.kinds), args.workers)
        records = harness.run_search(spec, ds, args.workers, _checkpoint_writer(out, ds))
        harness.write_results(records, out / "results.csv")
        rows = harness.summarize(records, ds.name, spec.top_k)
        harness.write_summary(rows, out / "summary.csv")
    finally:
        log.removeHandler(handler)
        handler.close()
    _print_summary(rows)
    return 0


def _print_summary(rows):
    for row in rows:
        print(f"{row['dataset']}/{row['optimizer']} {row['model']}: "
              f"min test nll {row['min_test_nll']:.4f}, "
              f"mean params {row['mean_param_count']:.0f} "
              f"({row['diverged']} diverged)")


def cmd_report(args):
    if args.results is None and args.out is None:
        raise UsageError("report: --results or --out is required")
    out = Path(args.out) if args.out else Path(args.results).parent
    results = Path(args.results) if args.results else out / "results.csv"
    if not results.exists():
        raise UsageError(f"report: {results} does not exist")
    manifest = {}
    if (out / "manifest.txt").exists():
        for line in (out / "manifest.txt").read_text().splitlines():
            key, _, value = line.partition("=")
            manifest[key] = value
    name = args.dataset_name or manifest.get("dataset.name", "unknown")
    iterations = int(manifest["iterations"]) if "iterations" in manifest else None
    records = harness.read_results(results, iterations)
    if not records:
        raise UsageError(f"report: {results} holds no trials")
    rows = harness.summarize(records, name, args.top_k)
    out.mkdir(parents=True, exist_ok=True)
    harness.write_summary(rows, out / "summary.csv")
    _print_summary(rows)
    return 0


COMMANDS = {"convert": cmd_convert, "train": cmd_train, "eval": cmd_eval,
            "search": cmd_search, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return COMMANDS[args.command](args)
    except DiagRNNError as exc:
        print(f"diagrnn: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, pickle.UnpicklingError, json.JSONDecodeError) as exc:
        print(f"diagrnn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
