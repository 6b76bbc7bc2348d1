"""Acceptance criteria, one test (or parametrized family) per criterion.

Run ``pytest tests/test_acceptance.py -v`` for a PASS/FAIL line per criterion
at the end of the output.  The real-data comparison is skipped unless
``DIAGRNN_JSB`` points at JSB Chorales in the interchange format.
"""

import math
import os
import time

import numpy as np
import pytest

from diagrnn import cells, data, harness
from diagrnn import model as M
from diagrnn.autodiff import Tape, add, hadamard, identity, sum_all
from diagrnn.cells import ALL_KINDS, CellKind
from diagrnn.cli import main

from conftest import central_difference, relative_error

ARCHS = ("vrnn", "gru", "lstm")


def criterion(number, title):
    return pytest.mark.criterion(number, title)


def unroll(kind, params, xs, h0=None, tape=None, **step_kw):
    tape = tape or Tape(seed=0)
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    state = cells.zero_state(kind, params["b"].shape[1], tape, batch=xs.shape[1])
    if h0 is not None:
        state.h = tape.const(h0)
    hs = []
    for x in xs:
        state = cells.step(kind, leaves, state, tape.const(x), **step_kw)
        hs.append(state.h)
    return tape, leaves, hs


def readout_loss(tape, hs, weights):
    total = None
    for h, w in zip(hs, weights):
        term = sum_all(hadamard(h, tape.const(w)))
        total = term if total is None else add(total, term)
    return total


@criterion(1, "gradient exactness, 2-layer model, all six kinds, 10 seeds (rel < 1e-6)")
@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_gradient_exactness(kind):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        cfg = M.ModelConfig(kind, 2, 6, 4, keep_prob=1.0)
        model = M.Model.init(cfg, seed)
        for _, a in model.named_params():
            a += rng.normal(0, 0.3, a.shape)
        rolls = [(rng.random((6, 4)) < 0.5).astype(float) for _ in range(2)]
        batch = M.Batch.from_rolls(rolls)
        assert batch.inputs.shape[:2] == (5, 2)

        tape = Tape(seed=seed)
        bound = model.bind(tape)
        tape.backward(M.loss(model, batch, True, tape, bound))
        names = [n for n, _ in model.named_params()]
        arrays = [a for _, a in model.named_params()]
        numeric = central_difference(
            lambda: M.loss(model, batch, False, Tape(grad=False)).value[0, 0], arrays, h=1e-5)
        for name, num in zip(names, numeric):
            err = relative_error(bound[name].grad, num)
            worst = max(worst, err)
            assert err < 1e-6, f"seed {seed} {name}: {err:.2e}"
    print(f"{kind}: worst relative gradient error {worst:.2e}")


@criterion(2, "diag(w) full cell equals diagonal cell (fwd 1e-12, grad 1e-9), 20 trials")
@pytest.mark.parametrize("arch", ARCHS)
def test_diagonal_full_equivalence(arch):
    diag, full = CellKind(arch, "diag"), CellKind(arch, "full")
    K, L, T, B = 5, 3, 6, 2
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        dparams = {k: v + rng.normal(0, 0.4, v.shape)
                   for k, v in cells.init_params(diag, K, L, trial).items()}
        fparams = {k: (np.diag(v[0]) if k.startswith("W") else v.copy())
                   for k, v in dparams.items()}
        xs = rng.normal(size=(T, B, L))
        weights = rng.normal(size=(T, B, K))
        dt, dleaves, dhs = unroll(diag, dparams, xs)
        ft, fleaves, fhs = unroll(full, fparams, xs)
        for a, b in zip(dhs, fhs):
            np.testing.assert_allclose(a.value, b.value, rtol=0, atol=1e-12)
        dt.backward(readout_loss(dt, dhs, weights))
        ft.backward(readout_loss(ft, fhs, weights))
        for name in dparams:
            dg, fg = dleaves[name].grad, fleaves[name].grad
            if name.startswith("W"):
                fg = np.diag(fg)[None, :]
            np.testing.assert_allclose(dg, fg, rtol=0, atol=1e-9)


@criterion(3, "identity VRNN matches the unrolled closed form for t <= 8 (1e-10)")
@pytest.mark.parametrize("recurrence", ["full", "diag"])
@pytest.mark.parametrize("zero_h0", [True, False], ids=["h0=0", "h0!=0"])
def test_linear_unroll(recurrence, zero_h0):
    kind = CellKind("vrnn", recurrence)
    K, L, T = 4, 3, 8
    rng = np.random.default_rng(7)
    params = cells.init_params(kind, K, L, seed=3)
    params["W"] = params["W"] * 2.0
    xs = rng.normal(size=(T, 1, L))
    h0 = np.zeros((1, K)) if zero_h0 else rng.normal(size=(1, K))
    _, _, hs = unroll(kind, params, xs, h0=h0, activation=identity)
    W, U = params["W"], params["U"]

    def power(t):
        if recurrence == "diag":
            return W ** t
        return np.linalg.matrix_power(W, t)

    def apply(v, t):
        return v * power(t) if recurrence == "diag" else v @ power(t)

    for t in range(1, T + 1):
        closed = apply(h0, t) + sum(apply(xs[k - 1] @ U, t - k) for k in range(1, t + 1))
        np.testing.assert_allclose(hs[t - 1].value, closed, rtol=0, atol=1e-10)


@criterion(4, "GRU with f=0, w=1 reproduces the VRNN trajectory (1e-12), 10 trials")
@pytest.mark.parametrize("recurrence", ["full", "diag"])
def test_gru_reduces_to_vrnn(recurrence):
    gru, vrnn = CellKind("gru", recurrence), CellKind("vrnn", recurrence)
    K, L, T = 6, 4, 7
    for trial in range(10):
        rng = np.random.default_rng(trial)
        gparams = {k: v + rng.normal(0, 0.3, v.shape)
                   for k, v in cells.init_params(gru, K, L, trial).items()}
        vparams = {k: gparams[k] for k in ("W", "U", "b")}
        xs = rng.normal(size=(T, 2, L))
        _, _, ghs = unroll(gru, gparams, xs, gates={"f": 0.0, "w": 1.0})
        _, _, vhs = unroll(vrnn, vparams, xs)
        for a, b in zip(ghs, vhs):
            np.testing.assert_allclose(a.value, b.value, rtol=0, atol=1e-12)


@criterion(5, "parameter counts match enumeration; diagonal counts linear in K")
def test_param_counts():
    assert cells.param_count(CellKind("vrnn", "full"), 4, 3) == 32
    assert cells.param_count(CellKind("vrnn", "diag"), 4, 3) == 20
    rng = np.random.default_rng(0)
    for _ in range(30):
        K, L = (int(v) for v in rng.integers(1, 60, size=2))
        for kind in ALL_KINDS:
            enumerated = sum(v.size for v in cells.init_params(kind, K, L, 0).values())
            assert cells.param_count(kind, K, L) == enumerated
    for kind in ALL_KINDS:
        deltas = [cells.param_count(kind, 2 * K, 7) - cells.param_count(kind, K, 7)
                  for K in range(1, 20)]
        second = np.diff(deltas)
        if kind.diagonal:
            assert len(set(second)) == 1
        else:
            assert (np.diff(second) > 0).all()


@criterion(6, "zero-initialized model scores exactly P ln 2 per frame (1e-12)")
@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_uniform_baseline(kind):
    rng = np.random.default_rng(1)
    raw = data.RawDataset("r", 30, {s: [[tuple(np.flatnonzero(rng.random(30) < 0.2))
                                          for _ in range(int(rng.integers(2, 40)))]
                                         for _ in range(5)] for s in data.SPLITS})
    ds = data.split_long(data.prune_pitches(raw), 16)
    model = M.Model.zeros(M.ModelConfig(kind, 2, 5, ds.P))
    for split in data.SPLITS:
        assert M.evaluate(model, ds.rolls(split)) == pytest.approx(ds.P * math.log(2), abs=1e-12)


@criterion(7, "VRNN-Diag learns the period-2 pattern: train NLL < 0.1 P ln 2 in 300 epochs")
def test_period2_learning():
    P = 4
    ds = data.split_long(data.prune_pitches(data.synthetic_period2(P=P, n_sequences=20)))
    config = harness.TrialConfig("p2", CellKind("vrnn", "diag"), "adam", 1, 16, 3e-3, 0.0,
                                 seed=0)
    start = time.perf_counter()
    record = harness.run_trial(config, ds, 300)
    elapsed = time.perf_counter() - start
    assert not record.diverged
    assert len(record.nll["train"]) == 301
    print(f"train NLL {record.nll['train'][0]:.4f} -> {record.nll['train'][-1]:.4f} "
          f"(threshold {0.1 * P * math.log(2):.4f}) in {elapsed:.1f}s")
    assert record.nll["train"][-1] < 0.1 * P * math.log(2)
    assert elapsed < 120


@criterion(8, "search with one master seed gives byte-identical results.csv across workers")
def test_search_determinism(tmp_path):
    dataset = tmp_path / "toy.txt"
    rng = np.random.default_rng(2)
    raw = data.RawDataset("toy", 12, {s: [[tuple(np.flatnonzero(rng.random(12) < 0.3))
                                            for _ in range(int(rng.integers(3, 12)))]
                                           for _ in range(4)] for s in data.SPLITS})
    data.dump(raw, dataset)
    base = ["search", "--dataset", str(dataset), "--samples", "2", "--iterations", "2",
            "--batch-size", "3", "--seed", "7", "--top-k", "2"]
    runs = {}
    for name, workers in (("a", 1), ("b", 1), ("c", 3)):
        out = tmp_path / name
        assert main(base + ["--out", str(out), "--workers", str(workers)]) == 0
        runs[name] = out
    reference = (runs["a"] / "results.csv").read_bytes()
    assert reference.count(b"\n") == 1 + 6 * 2 * 3 * 3
    for name in ("b", "c"):
        assert (runs[name] / "results.csv").read_bytes() == reference
        assert (runs[name] / "summary.csv").read_bytes() == (runs["a"] / "summary.csv").read_bytes()
        for ckpt in (runs["a"] / "checkpoints").iterdir():
            assert (runs[name] / "checkpoints" / ckpt.name).read_bytes() == ckpt.read_bytes()
    assert (runs["b"] / "manifest.txt").read_bytes() == (runs["a"] / "manifest.txt").read_bytes()


@criterion(9, "JSB/Adam: diagonal beats full for >= 2 of 3 architectures (needs DIAGRNN_JSB)")
def test_jsb_direction(tmp_path):
    path = os.environ.get("DIAGRNN_JSB")
    if not path:
        pytest.skip("set DIAGRNN_JSB to JSB Chorales in the interchange format to run this")
    samples = int(os.environ.get("DIAGRNN_JSB_SAMPLES", "15"))
    workers = int(os.environ.get("DIAGRNN_JSB_WORKERS", str(os.cpu_count() or 1)))
    ds = data.prepare(path, 200)
    spec = harness.SearchSpec(optimizer="adam", samples=samples, seed=0)
    records = harness.run_search(spec, ds, workers)
    harness.write_results(records, tmp_path / "results.csv")
    rows = {r["model"]: r for r in harness.summarize(records, ds.name, spec.top_k)}
    wins = 0
    for arch in ARCHS:
        full, diag = rows[f"{arch}-full"]["min_test_nll"], rows[f"{arch}-diag"]["min_test_nll"]
        print(f"{arch}: full {full:.3f}  diag {diag:.3f}")
        wins += diag < full
    assert wins >= 2
