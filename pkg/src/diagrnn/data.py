"""Piano-roll datasets: interchange text format, pitch pruning, chunking, batching.

Interchange format (UTF-8, LF line endings, one dataset per file)::

    #dataset <name> <P_raw>
    #split train
    60,64,67;60,64,67;;62
    ...
    #split valid
    #split test

Every line after a ``#split`` marker is one sequence.  Frames are separated
by ``;`` and each frame is a comma-separated list of pitch integers in
``[0, P_raw)``.  An empty field is a silent frame, so an empty line is a
one-frame silent sequence.  Files ending in ``.gz`` are read and written
through gzip.
"""

import gzip
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError, UsageError
from .model import Batch

SPLITS = ("train", "valid", "test")


@dataclass
class RawDataset:
    """Sequences as lists of frames; a frame is a sorted tuple of raw pitches."""

    name: str
    num_pitches: int
    splits: dict

    def report(self):
        rows = {s: (len(seqs), sum(len(q) for q in seqs)) for s, seqs in self.splits.items()}
        return {"sequences": {s: r[0] for s, r in rows.items()},
                "frames": {s: r[1] for s, r in rows.items()},
                "empty_splits": [s for s in SPLITS if not self.splits[s]]}


@dataclass
class Dataset:
    name: str
    splits: dict
    pitch_map: dict
    _rolls: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def P(self):
        return len(self.pitch_map)

    def rolls(self, split):
        """Dense ``(T, P)`` float arrays for one split."""
        if split not in self._rolls:
            self._rolls[split] = [to_roll(seq, self.P) for seq in self.splits[split]]
        return self._rolls[split]


def to_roll(seq, P):
    roll = np.zeros((len(seq), P))
    for t, frame in enumerate(seq):
        roll[t, list(frame)] = 1.0
    return roll


def from_roll(roll):
    """Binarize a dense roll (any nonzero entry is an active note)."""
    return [tuple(int(p) for p in np.flatnonzero(row)) for row in np.asarray(roll)]


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def parse(text, source="<string>"):
    if "\r" in text:
        raise ParseError(f"{source}: CR characters are not allowed (use LF line endings)", 1)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("#dataset "):
        raise ParseError(f"{source}: first line must be '#dataset <name> <P_raw>'", 1)
    head = lines[0].split(" ")
    if len(head) != 3:
        raise ParseError(f"{source}: malformed header {lines[0]!r}", 1)
    try:
        num_pitches = int(head[2])
    except ValueError:
        raise ParseError(f"{source}: pitch count {head[2]!r} is not an integer", 1) from None
    if num_pitches < 1:
        raise ParseError(f"{source}: pitch count must be positive", 1)

    splits = {}
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#split "):
            current = line[len("#split "):]
            if current not in SPLITS:
                raise ParseError(f"{source}: unknown split {current!r}", lineno)
            if current in splits:
                raise ParseError(f"{source}: split {current!r} appears twice", lineno)
            splits[current] = []
            continue
        if current is None:
            raise ParseError(f"{source}: sequence before any '#split' marker", lineno)
        splits[current].append(_parse_sequence(line, num_pitches, source, lineno))
    missing = [s for s in SPLITS if s not in splits]
    if missing:
        raise ParseError(f"{source}: missing split marker(s) for {', '.join(missing)}",
                         len(lines))
    return RawDataset(head[1], num_pitches, {s: splits[s] for s in SPLITS})


def _parse_sequence(line, num_pitches, source, lineno):
    frames = []
    for field_ in line.split(";"):
        if field_ == "":
            frames.append(())
            continue
        try:
            pitches = [int(tok) for tok in field_.split(",")]
        except ValueError:
            raise ParseError(f"{source}: bad frame {field_!r}", lineno) from None
        for p in pitches:
            if not 0 <= p < num_pitches:
                raise ParseError(f"{source}: pitch {p} outside [0, {num_pitches})", lineno)
        frames.append(tuple(sorted(set(pitches))))
    return frames


def load(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with _open(path, "r") as fh:
        return parse(fh.read(), str(path))


def dumps(raw):
    lines = [f"#dataset {raw.name} {raw.num_pitches}"]
    for split in SPLITS:
        lines.append(f"#split {split}")
        for seq in raw.splits[split]:
            lines.append(";".join(",".join(str(p) for p in frame) for frame in seq))
    return "\n".join(lines) + "\n"


def dump(raw, path):
    with _open(path, "w") as fh:
        fh.write(dumps(raw))


def from_nested(name, splits, num_pitches=128):
    """Binarize ``{"train": [[[pitch, ...], ...], ...], ...}`` nested lists.

    This is the layout of the published pickled piano-rolls (MIDI note
    numbers per frame).
    """
    out = {}
    for split in SPLITS:
        seqs = []
        for seq in splits.get(split, []):
            frames = [tuple(sorted({int(round(p)) for p in frame})) for frame in seq]
            if frames:
                seqs.append(frames)
        out[split] = seqs
    raw = RawDataset(name, num_pitches, out)
    for seqs in out.values():
        for seq in seqs:
            for frame in seq:
                if frame and not (0 <= frame[0] and frame[-1] < num_pitches):
                    raise DataError(f"pitch outside [0, {num_pitches}) in {name}")
    return raw


def prune_pitches(raw):
    """Keep only pitches active somewhere in the dataset (union over splits)."""
    active = sorted({p for seqs in raw.splits.values() for seq in seqs
                     for frame in seq for p in frame})
    if not active:
        raise DataError(f"{raw.name}: no active pitches in any split")
    pitch_map = {p: i for i, p in enumerate(active)}
    splits = {s: [[tuple(pitch_map[p] for p in frame) for frame in seq] for seq in seqs]
              for s, seqs in raw.splits.items()}
    return Dataset(raw.name, splits, pitch_map)


def split_long(ds, max_len=200):
    """Cut every sequence greedily into chunks of at most ``max_len`` frames."""
    if max_len < 2:
        raise ConfigError(f"max_len must be >= 2, got {max_len}")
    splits = {s: [seq[i:i + max_len] for seq in seqs for i in range(0, len(seq), max_len)]
              for s, seqs in ds.splits.items()}
    return Dataset(ds.name, splits, dict(ds.pitch_map))


def prepare(path, max_len=200):
    """load -> prune_pitches -> split_long."""
    return split_long(prune_pitches(load(path)), max_len)


def make_batches(rolls, batch_size, seed=None):
    """Group dense rolls into padded next-frame batches.

    With a seed the order is shuffled first (training); without one the
    input order is kept.  Sequences shorter than two frames have no target
    and are left out.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    usable = [r for r in rolls if len(r) >= 2]
    if not usable:
        raise UsageError("split has no sequence with at least two frames")
    order = np.arange(len(usable))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(usable))
    return [Batch.from_rolls([usable[i] for i in order[s:s + batch_size]])
            for s in range(0, len(order), batch_size)]


def synthetic_period2(P=4, n_sequences=20, name="period2"):
    """Alternating two-chord sequences; each next frame is fixed by the current one.

    Pitches ``0..P/2-1`` form one chord and the rest the other.  Sequence
    ``i`` starts on chord ``i % 2`` and has ``8 + i % 5`` frames.  Every split
    gets the same sequences.
    """
    if P < 2:
        raise ConfigError("period-2 pattern needs at least 2 pitches")
    chords = (tuple(range(P // 2)), tuple(range(P // 2, P)))
    seqs = [[chords[(i + t) % 2] for t in range(8 + i % 5)] for i in range(n_sequences)]
    return RawDataset(name, P, {s: [list(q) for q in seqs] for s in SPLITS})
