"""Synthetic corpora, feature normalisation and sequence file I/O.

The acoustic corpus is built so that the conditional mean of the targets is
over-smoothed relative to the targets themselves: every segment carries a
residual drawn from a two-component mixture (+offset or -offset), so a
model trained on squared error learns the midpoint and loses variance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from advspss.errors import ConfigError, UsageError

FSEQ_HEADER = "FSEQ v1"
CORPUS_FORMAT = "advspss-corpus v1"
STD_FLOOR = 1e-8


class FseqError(ValueError):
    pass


def write_fseq(path: str | Path, frames: np.ndarray) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    T, D = frames.shape
    lines = [FSEQ_HEADER, f"{T} {D}"]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in frames)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_fseq(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != FSEQ_HEADER:
        raise FseqError(f"{path}: line 1: expected header {FSEQ_HEADER!r}")
    if len(lines) < 2:
        raise FseqError(f"{path}: line 2: missing 'T D' dimensions")
    try:
        T, D = (int(tok) for tok in lines[1].split())
    except ValueError:
        raise FseqError(f"{path}: line 2: expected two integers 'T D', got {lines[1]!r}") from None
    if T < 0 or D < 1:
        raise FseqError(f"{path}: line 2: invalid dimensions T={T}, D={D}")
    if len(lines) - 2 != T:
        raise FseqError(f"{path}: expected {T} rows, found {len(lines) - 2}")
    out = np.empty((T, D))
    for t in range(T):
        lineno = t + 3
        toks = lines[t + 2].split()
        if len(toks) != D:
            raise FseqError(f"{path}: line {lineno}: expected {D} values, found {len(toks)}")
        try:
            out[t] = [float(tok) for tok in toks]
        except ValueError:
            raise FseqError(f"{path}: line {lineno}: non-numeric token in {lines[t + 2]!r}") from None
    return out


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, seqs: Iterable[np.ndarray]) -> "Normalizer":
        frames = np.concatenate([np.asarray(s, dtype=np.float64) for s in seqs], axis=0)
        return cls(frames.mean(axis=0), np.maximum(frames.std(axis=0), STD_FLOOR))

    def _check(self, seq: np.ndarray) -> np.ndarray:
        seq = np.asarray(seq, dtype=np.float64)
        if seq.shape[-1] != self.mean.shape[0]:
            raise ConfigError(f"sequence width {seq.shape[-1]} != normalizer width {self.mean.shape[0]}")
        return seq

    def normalize(self, seq: np.ndarray) -> np.ndarray:
        return (self._check(seq) - self.mean) / self.std

    def denormalize(self, seq: np.ndarray) -> np.ndarray:
        return self._check(seq) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def normalize(seq: np.ndarray, norm: Normalizer) -> np.ndarray:
    return norm.normalize(seq)


def denormalize(seq: np.ndarray, norm: Normalizer) -> np.ndarray:
    return norm.denormalize(seq)


@dataclass
class Utterance:
    uid: str
    x: np.ndarray  # (T, input_dim) linguistic features
    y: np.ndarray  # (T, output_dim) static acoustic targets, unnormalised


@dataclass
class DurationUtterance:
    uid: str
    x: np.ndarray  # (P, input_dim) phoneme-level linguistic features
    durations: np.ndarray  # (P,) frames per phoneme
    groups: list[list[int]]  # isochrony units as phoneme index lists


@dataclass
class Corpus:
    train: list[Utterance]
    eval: list[Utterance]
    normalizer: Normalizer
    seed: int = 0
    input_dim: int = 0
    output_dim: int = 0
    dur_train: list[DurationUtterance] = field(default_factory=list)
    dur_eval: list[DurationUtterance] = field(default_factory=list)
    prosodic_dims: list[int] = field(default_factory=list)

    def pairs(self, split: str = "train") -> list[tuple[np.ndarray, np.ndarray]]:
        """(input, normalised target) pairs for one split."""
        utts = self.train if split == "train" else self.eval
        return [(u.x, self.normalizer.normalize(u.y)) for u in utts]


# -- synthetic generation ------------------------------------------------------

@dataclass(frozen=True)
class TargetMap:
    """Fixed random tanh network standing in for the linguistic-to-acoustic mapping."""

    A: np.ndarray
    a: np.ndarray
    B: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, input_dim: int, output_dim: int, hidden: int = 32) -> "TargetMap":
        A = rng.normal(0.0, 1.5, size=(hidden, input_dim))
        a = rng.normal(0.0, 0.5, size=hidden)
        B = rng.normal(0.0, 1.5 / np.sqrt(hidden), size=(output_dim, hidden))
        return cls(A, a, B)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.A.T + self.a) @ self.B.T


def _segments(rng: np.random.Generator, T: int, lo: int = 3, hi: int = 12) -> list[int]:
    lens = []
    while sum(lens) < T:
        lens.append(int(rng.integers(lo, hi + 1)))
    lens[-1] -= sum(lens) - T
    if lens[-1] < 1:
        lens.pop()
        lens[-1] += T - sum(lens)
    return lens


def _utterance(rng, T, n_classes, tmap, offsets, residual, jitter):
    xs, res = [], []
    for length in _segments(rng, T):
        c = int(rng.integers(n_classes))
        pos = (np.arange(length) + 0.5) / length
        code = np.zeros((length, n_classes))
        code[:, c] = 1.0
        feats = np.column_stack([pos, np.sin(np.pi * pos), np.full(length, length / 12.0)])
        xs.append(np.hstack([code, feats]))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        res.append(sign * np.outer(np.sin(np.pi * pos), offsets[c]))
    x = np.vstack(xs)
    y = tmap(x)
    noise = jitter * rng.standard_normal(y.shape)
    if residual:
        y = y + np.vstack(res) + noise
    return x, y


def gen_corpus(
    seed: int,
    n_utts: int = 60,
    T_range: tuple[int, int] = (40, 120),
    input_dim: int = 24,
    output_dim: int = 4,
    n_eval: int | None = None,
    residual: bool = True,
    residual_scale: float = 1.3,
    jitter: float = 0.05,
    with_durations: bool = True,
) -> Corpus:
    """Seeded synthetic acoustic corpus (plus a duration corpus by default).

    Inputs are one-hot segment classes (``input_dim - 3`` of them) followed by
    three within-segment position features. ``n_utts`` counts train + eval;
    the eval share defaults to one sixth.
    """
    if input_dim < 4 or output_dim < 1:
        raise ConfigError(f"need input_dim >= 4 and output_dim >= 1, got {input_dim}, {output_dim}")
    if n_utts < 2:
        raise ConfigError("need at least two utterances (one train, one eval)")
    lo, hi = T_range
    if not 3 <= lo <= hi:
        raise ConfigError(f"invalid frame range {T_range}")
    n_eval = max(1, n_utts // 6) if n_eval is None else n_eval
    rng = np.random.default_rng(seed)
    n_classes = input_dim - 3
    tmap = TargetMap.random(rng, input_dim, output_dim)
    offsets = rng.normal(0.0, residual_scale, size=(n_classes, output_dim))
    utts = []
    for i in range(n_utts):
        T = int(rng.integers(lo, hi + 1))
        x, y = _utterance(rng, T, n_classes, tmap, offsets, residual, jitter)
        utts.append(Utterance(f"utt{i:04d}", x, y))
    train, ev = utts[: n_utts - n_eval], utts[n_utts - n_eval :]
    corpus = Corpus(train, ev, Normalizer.fit(u.y for u in train), seed, input_dim, output_dim)
    if with_durations:
        dur = gen_duration_corpus(seed, n_utts=n_utts, n_eval=n_eval)
        corpus.dur_train, corpus.dur_eval = dur
    return corpus


def gen_duration_corpus(
    seed: int,
    n_utts: int = 60,
    P_range: tuple[int, int] = (20, 40),
    input_dim: int = 12,
    n_eval: int | None = None,
    residual: bool = True,
) -> tuple[list[DurationUtterance], list[DurationUtterance]]:
    """Phoneme durations grouped into random 1-3 phoneme isochrony units.

    Each unit draws a tempo mode (fast or slow) that stretches all of its
    phonemes together, so unit durations are bimodal given the inputs.
    """
    rng = np.random.default_rng([seed, 1])
    n_eval = max(1, n_utts // 6) if n_eval is None else n_eval
    n_classes = input_dim - 2
    base = rng.uniform(6.0, 16.0, size=n_classes)
    stretch = rng.uniform(3.0, 6.0, size=n_classes)
    out = []
    for i in range(n_utts):
        P = int(rng.integers(P_range[0], P_range[1] + 1))
        groups, start = [], 0
        while start < P:
            size = min(int(rng.integers(1, 4)), P - start)
            groups.append(list(range(start, start + size)))
            start += size
        cls = rng.integers(n_classes, size=P)
        x = np.zeros((P, input_dim))
        x[np.arange(P), cls] = 1.0
        d = base[cls].copy()
        for g in groups:
            x[g, n_classes] = len(g) / 3.0
            x[g, n_classes + 1] = (np.arange(len(g)) + 0.5) / len(g)
            if residual:
                mode = 1.0 if rng.random() < 0.5 else -1.0
                d[g] += mode * stretch[cls[g]]
        d = np.maximum(d + 0.5 * rng.standard_normal(P), 1.0)
        out.append(DurationUtterance(f"dur{i:04d}", x, d, groups))
    return out[: n_utts - n_eval], out[n_utts - n_eval :]


# -- corpus directory ------------------------------------------------------------

def save_corpus(corpus: Corpus, root: str | Path) -> Path:
    root = Path(root)
    entries, dur_entries = [], []
    for split, utts in (("train", corpus.train), ("eval", corpus.eval)):
        (root / split).mkdir(parents=True, exist_ok=True)
        for u in utts:
            xin, yout = f"{split}/{u.uid}.in.fseq", f"{split}/{u.uid}.out.fseq"
            write_fseq(root / xin, u.x)
            write_fseq(root / yout, u.y)
            entries.append({"id": u.uid, "split": split, "input": xin, "target": yout})
    for split, utts in (("train", corpus.dur_train), ("eval", corpus.dur_eval)):
        (root / split).mkdir(parents=True, exist_ok=True)
        for u in utts:
            xin, dout = f"{split}/{u.uid}.in.fseq", f"{split}/{u.uid}.dur.fseq"
            write_fseq(root / xin, u.x)
            write_fseq(root / dout, u.durations[:, None])
            dur_entries.append({"id": u.uid, "split": split, "input": xin, "durations": dout, "groups": u.groups})
    index = {
        "format": CORPUS_FORMAT,
        "seed": corpus.seed,
        "input_dim": corpus.input_dim,
        "output_dim": corpus.output_dim,
        "prosodic_dims": corpus.prosodic_dims,
        "normalizer": corpus.normalizer.to_dict(),
        "utterances": entries,
        "durations": dur_entries,
    }
    (root / "index.json").write_text(json.dumps(index, indent=1) + "\n", encoding="utf-8")
    return root


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    index_path = root / "index.json"
    if not index_path.is_file():
        raise UsageError(f"no corpus index at {index_path}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    if index.get("format") != CORPUS_FORMAT:
        raise UsageError(f"{index_path}: unsupported corpus format {index.get('format')!r}")
    splits: dict[str, list] = {"train": [], "eval": []}
    for e in index["utterances"]:
        splits[e["split"]].append(Utterance(e["id"], read_fseq(root / e["input"]), read_fseq(root / e["target"])))
    dsplits: dict[str, list] = {"train": [], "eval": []}
    for e in index.get("durations", []):
        dsplits[e["split"]].append(
            DurationUtterance(
                e["id"], read_fseq(root / e["input"]), read_fseq(root / e["durations"])[:, 0], [list(g) for g in e["groups"]]
            )
        )
    return Corpus(
        splits["train"],
        splits["eval"],
        Normalizer.from_dict(index["normalizer"]),
        index.get("seed", 0),
        index["input_dim"],
        index["output_dim"],
        dsplits["train"],
        dsplits["eval"],
        index.get("prosodic_dims", []),
    )


def corpus_fingerprint(root: str | Path) -> str:
    """SHA-256 over the index and every file it references."""
    root = Path(root)
    h = hashlib.sha256()
    index_bytes = (root / "index.json").read_bytes()
    h.update(index_bytes)
    index = json.loads(index_bytes)
    paths = []
    for e in index["utterances"]:
        paths += [e["input"], e["target"]]
    for e in index.get("durations", []):
        paths += [e["input"], e["durations"]]
    for rel in paths:
        h.update(rel.encode())
        h.update((root / rel).read_bytes())
    return h.hexdigest()


def drop_silence(utts: list[Utterance], fraction: float = 0.0) -> list[Utterance]:
    """Silent-frame removal hook. Synthetic corpora have no silence, so only 0 is accepted."""
    if fraction != 0.0:
        raise ConfigError("synthetic corpora carry no silent frames to remove")
    return utts
