"""Numerical divergences between 1D histograms, used as test oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from advspss.errors import ConfigError

DEFAULT_BINS = 2048


@dataclass(frozen=True)
class Histogram:
    """Probability masses on bins given by ``edges`` (len(mass) + 1 values)."""

    edges: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        if self.edges.ndim != 1 or self.edges.size != self.mass.size + 1:
            raise ConfigError("edges must have exactly one more entry than mass")
        if np.any(np.diff(self.edges) <= 0):
            raise ConfigError("edges must be strictly increasing")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw points uniformly within bins chosen by mass."""
        idx = rng.choice(self.mass.size, size=n, p=self.mass)
        lo, hi = self.edges[idx], self.edges[idx + 1]
        return lo + (hi - lo) * rng.random(n)


def from_pdf(pdf: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, bins: int = DEFAULT_BINS) -> Histogram:
    edges = np.linspace(lo, hi, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mass = np.maximum(pdf(centers), 0.0) * np.diff(edges)
    return Histogram(edges, mass / mass.sum())


def gaussian(mu: float, sigma: float, lo: float, hi: float, bins: int = DEFAULT_BINS) -> Histogram:
    return from_pdf(lambda x: np.exp(-0.5 * ((x - mu) / sigma) ** 2), lo, hi, bins)


def point_masses(points, weights, edges) -> Histogram:
    edges = np.asarray(edges, dtype=np.float64)
    mass = np.zeros(edges.size - 1)
    for x, w in zip(points, weights):
        k = np.searchsorted(edges, x, side="right") - 1
        if not 0 <= k < mass.size:
            raise ConfigError(f"point {x} lies outside the grid")
        mass[k] += w
    return Histogram(edges, mass)


def _check_pair(p: Histogram, q: Histogram) -> None:
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ConfigError("histograms must share the same grid")
    for name, h in (("p", p), ("q", q)):
        if np.any(h.mass < 0) or abs(h.mass.sum() - 1.0) > 1e-9:
            raise ConfigError(f"{name} is not a normalised histogram (sum {h.mass.sum():.12g})")


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def divergence_oracle(kind: str, p: Histogram, q: Histogram) -> float:
    """Divergence between two histograms on a shared grid.

    ``kind`` is one of ``kl``, ``rkl`` (= KL(q||p)), ``js`` or ``em``
    (1D earth-mover distance from the cumulative distributions).
    """
    _check_pair(p, q)
    if kind == "kl":
        return _kl(p.mass, q.mass)
    if kind == "rkl":
        return _kl(q.mass, p.mass)
    if kind == "js":
        m = 0.5 * (p.mass + q.mass)
        return 0.5 * _kl(p.mass, m) + 0.5 * _kl(q.mass, m)
    if kind == "em":
        gap = np.abs(np.cumsum(p.mass) - np.cumsum(q.mass))[:-1]
        return float(np.sum(gap * np.diff(p.centers)))
    raise ConfigError(f"unknown divergence {kind!r}")
