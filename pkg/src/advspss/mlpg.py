"""Dynamic-feature windows and maximum-likelihood parameter generation.

Sequences are stored frame-major: a static sequence is a (T, D) array and
its static-dynamic counterpart is (T, 3D) with columns ordered
``[static | delta | delta-delta]``. Flattening either in C order gives the
stacked vectors the window and generation matrices act on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from advspss.errors import ConfigError, NumericalError, UsageError

DELTA_WINDOW = (-0.5, 0.0, 0.5)
ACCEL_WINDOW = (1.0, -2.0, 1.0)
VARIANCE_FLOOR = 1e-8


def build_window_matrix(
    T: int,
    D: int,
    windows: Sequence[Sequence[float]] = (DELTA_WINDOW, ACCEL_WINDOW),
) -> sp.csr_matrix:
    """Sparse (len(windows)+1)*D*T x D*T matrix mapping statics to static-dynamic features.

    Each window is centred (odd length); frames outside [0, T) contribute zero.
    """
    if T < 1 or D < 1:
        raise ConfigError(f"T and D must be positive, got T={T}, D={D}")
    wins = [(1.0,)] + [tuple(w) for w in windows]
    for w in wins:
        if len(w) % 2 != 1:
            raise ConfigError(f"window {w} must have odd length")
    K = len(wins)
    rows, cols, vals = [], [], []
    for t in range(T):
        for k, w in enumerate(wins):
            half = len(w) // 2
            for j, c in enumerate(w):
                s = t + j - half
                if c == 0.0 or not 0 <= s < T:
                    continue
                for d in range(D):
                    rows.append(t * K * D + k * D + d)
                    cols.append(s * D + d)
                    vals.append(c)
    return sp.csr_matrix((vals, (rows, cols)), shape=(K * D * T, D * T))


def static_dynamic(y: np.ndarray, windows=(DELTA_WINDOW, ACCEL_WINDOW)) -> np.ndarray:
    """Append dynamic features to a (T, D) static sequence."""
    y = np.asarray(y, dtype=np.float64)
    T, D = y.shape
    W = build_window_matrix(T, D, windows)
    return (W @ y.ravel()).reshape(T, -1)


def estimate_covariance(corpus: Sequence[np.ndarray]) -> np.ndarray:
    """Per-dimension population variance of static-dynamic frames, floored."""
    if len(corpus) == 0:
        raise UsageError("cannot estimate covariance from an empty corpus")
    frames = np.concatenate([np.asarray(Y, dtype=np.float64) for Y in corpus], axis=0)
    if frames.shape[0] < 2:
        raise UsageError("need at least two frames to estimate covariance")
    return np.maximum(frames.var(axis=0), VARIANCE_FLOOR)


def tile_covariance(var: np.ndarray, T: int) -> np.ndarray:
    """Diagonal of the block-diagonal covariance, one identical block per frame."""
    return np.tile(np.asarray(var, dtype=np.float64), T)


def generation_matrix(W: sp.spmatrix, sigma_diag: np.ndarray) -> np.ndarray:
    """R = (W' S^-1 W)^-1 W' S^-1 as a dense array."""
    sigma_diag = np.asarray(sigma_diag, dtype=np.float64)
    if sigma_diag.shape != (W.shape[0],):
        raise ConfigError(f"covariance length {sigma_diag.shape} does not match window rows {W.shape[0]}")
    if np.any(sigma_diag <= 0):
        raise ConfigError("covariance entries must be strictly positive")
    Wd = W.toarray() if sp.issparse(W) else np.asarray(W, dtype=np.float64)
    WtSi = Wd.T / sigma_diag
    normal = WtSi @ Wd
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"normal matrix W'S^-1W is singular (condition number {cond:.3g})")
    return np.linalg.solve(normal, WtSi)


@dataclass
class MlpgSystem:
    """Window matrix, per-frame diagonal covariance and generation matrix for one length T."""

    T: int
    D: int
    window: sp.csr_matrix
    covariance: np.ndarray  # diagonal of the 3DT x 3DT matrix
    generation: np.ndarray  # (DT, 3DT)

    @classmethod
    def build(cls, T: int, var: np.ndarray, windows=(DELTA_WINDOW, ACCEL_WINDOW)) -> "MlpgSystem":
        var = np.asarray(var, dtype=np.float64)
        K = len(windows) + 1
        if var.shape[0] % K:
            raise ConfigError(f"variance length {var.shape[0]} is not a multiple of {K}")
        D = var.shape[0] // K
        W = build_window_matrix(T, D, windows)
        cov = tile_covariance(var, T)
        return cls(T, D, W, cov, generation_matrix(W, cov))

    @property
    def sd_dim(self) -> int:
        return self.window.shape[0] // self.T


@dataclass
class SystemCache:
    """Lazily builds and memoises one :class:`MlpgSystem` per sequence length."""

    var: np.ndarray
    windows: tuple = (DELTA_WINDOW, ACCEL_WINDOW)
    _systems: dict = field(default_factory=dict, repr=False)

    def __call__(self, T: int) -> MlpgSystem:
        if T not in self._systems:
            self._systems[T] = MlpgSystem.build(T, self.var, self.windows)
        return self._systems[T]


def mlpg_generate(system: MlpgSystem, Yhat: np.ndarray) -> np.ndarray:
    """Generate the static trajectory y = R Yhat, returned as (T, D)."""
    Yhat = np.asarray(Yhat, dtype=np.float64)
    if Yhat.shape != (system.T, system.sd_dim):
        raise ConfigError(f"Yhat shape {Yhat.shape} != {(system.T, system.sd_dim)}")
    return (system.generation @ Yhat.ravel()).reshape(system.T, system.D)


def _check_same(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    return a, b


def mse_loss(Y: np.ndarray, Yhat: np.ndarray) -> float:
    """(1/T) * squared error summed over all frames and dimensions."""
    Y, Yhat = _check_same(Y, Yhat)
    return float(np.sum((Yhat - Y) ** 2) / Y.shape[0])


def mse_grad(Y: np.ndarray, Yhat: np.ndarray) -> np.ndarray:
    Y2, Yhat2 = _check_same(Y, Yhat)
    return (2.0 / Y2.shape[0] * (Yhat2 - Y2)).reshape(np.shape(Yhat))


# The generation error is an MSE on the static trajectory.
mge_loss = mse_loss


def mge_grad_wrt_Yhat(y: np.ndarray, yhat: np.ndarray, system: MlpgSystem) -> np.ndarray:
    """Exact derivative of mge_loss(y, R Yhat) w.r.t. Yhat: R'(yhat - y) * 2/T."""
    return backprop_through_mlpg(system, mse_grad(y, yhat))


def backprop_through_mlpg(system: MlpgSystem, grad_y: np.ndarray) -> np.ndarray:
    """Map a gradient w.r.t. the static trajectory to one w.r.t. Yhat."""
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != (system.T, system.D):
        raise ConfigError(f"gradient shape {grad_y.shape} != {(system.T, system.D)}")
    return (system.generation.T @ grad_y.ravel()).reshape(system.T, system.sd_dim)
