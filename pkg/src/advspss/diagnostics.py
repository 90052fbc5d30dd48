"""Objective analysis: global variance, spoofing rate, pooled statistics, scatter export.

Variances use the population convention (divide by N) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from advspss.data import write_fseq
from advspss.errors import ConfigError, UsageError
from advspss.mlpg import build_window_matrix
from advspss.net import Mlp
from advspss.trainer import apply_phi, scores


def global_variance(seq: np.ndarray) -> np.ndarray:
    """Per-dimension variance of one (T, D) sequence over its frames."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    if seq.shape[0] < 2:
        raise UsageError(f"global variance needs at least 2 frames, got {seq.shape[0]}")
    return seq.var(axis=0)


def corpus_gv(seqs: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of the per-utterance GV profiles."""
    if not seqs:
        raise UsageError("no sequences")
    return np.mean([global_variance(s) for s in seqs], axis=0)


def gv_log_ratio(gen: Sequence[np.ndarray], nat: Sequence[np.ndarray]) -> np.ndarray:
    return np.log(corpus_gv(gen) / corpus_gv(nat))


@dataclass(frozen=True)
class SpoofingReport:
    total_frames: int
    spoofed_frames: int

    @property
    def rate(self) -> float:
        return self.spoofed_frames / self.total_frames if self.total_frames else 0.0


def spoofing_rate(disc: Mlp, generated: Sequence[np.ndarray], phi: str = "identity") -> SpoofingReport:
    """Frames whose posterior of being natural exceeds 0.5, i.e. score > 0."""
    spoofed = total = 0
    for y in generated:
        W = build_window_matrix(y.shape[0], y.shape[1]) if phi == "static_delta" else None
        s = scores(disc, apply_phi(phi, y, W))
        spoofed += int(np.sum(s > 0.0))
        total += s.size
    return SpoofingReport(total, spoofed)


def discriminator_accuracy(disc: Mlp, natural: Sequence[np.ndarray], generated: Sequence[np.ndarray], phi: str = "identity") -> float:
    """Frame accuracy on the balanced union, counting score > 0 as 'natural'."""
    nat = spoofing_rate(disc, natural, phi)
    gen = spoofing_rate(disc, generated, phi)
    # average the per-class accuracies so unequal frame counts stay balanced
    return 0.5 * (nat.rate + (1.0 - gen.rate))


def sequence_stats(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Pooled mean and variance per scalar stream over all frames."""
    if not seqs:
        raise UsageError("no sequences")
    frames = np.concatenate([_as_frames(s) for s in seqs])
    if frames.shape[0] == 0:
        raise UsageError("no frames")
    return frames.mean(axis=0), frames.var(axis=0)


def _as_frames(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    return seq[:, None] if seq.ndim == 1 else seq


def export_scatter(seqs: Sequence[np.ndarray], dims: tuple[int, int], path: str | Path) -> Path:
    """Write the (value_i, value_j) pairs of every frame as a 2-column FSEQ file."""
    i, j = dims
    frames = np.concatenate([np.asarray(s, dtype=np.float64) for s in seqs])
    D = frames.shape[1]
    if not (0 <= i < D and 0 <= j < D):
        raise ConfigError(f"dims {dims} out of range for {D}-dimensional sequences")
    path = Path(path)
    write_fseq(path, frames[:, [i, j]])
    return path
