"""Alternating optimisation of acoustic model and discriminator.

The schedule is: frame-wise MSE initialisation of the acoustic model, MGE
training through parameter generation, discriminator initialisation on
natural vs. MGE-generated parameters, then the joint loop where every
utterance triggers one discriminator update followed by one acoustic-model
update on ``L_MGE + omega_d * (E_MGE / E_ADV) * L_ADV``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from advspss.errors import ConfigError, NumericalError, UsageError
from advspss.gans import GanVariant
from advspss.mlpg import (
    SystemCache,
    backprop_through_mlpg,
    estimate_covariance,
    mge_loss,
    mlpg_generate,
    mse_grad,
    mse_loss,
    static_dynamic,
)
from advspss.net import Mlp, backward, clip_weights, forward, init_mlp, sgd_step

PHIS = ("identity", "static_delta")
HISTORY_FIELDS = ("phase", "iteration", "l_mge", "l_adv", "l_d", "spoofing_rate")

Pair = tuple[np.ndarray, np.ndarray]


@dataclass
class TrainConfig:
    omega_d: float = 1.0
    eta: float = 0.05
    eta_d: float | None = None  # discriminator step size; None reuses eta
    init_mse_iters: int = 10
    mge_iters: int = 25
    disc_init_iters: int = 5
    joint_iters: int = 25
    ref_iters: int = 20  # passes for the frozen spoofing-rate reference; 0 reuses the initialised discriminator
    gan: GanVariant = field(default_factory=GanVariant)
    phi: str = "identity"
    seed: int = 0
    gen_hidden: list[int] = field(default_factory=lambda: [64, 64, 64])
    disc_hidden: list[int] = field(default_factory=lambda: [64, 64])

    def __post_init__(self):
        if isinstance(self.gan, dict):
            self.gan = GanVariant(**{k: tuple(v) if k == "labels" else v for k, v in self.gan.items()})
        elif isinstance(self.gan, str):
            self.gan = GanVariant(self.gan)
        if self.omega_d < 0:
            raise ConfigError(f"omega_d must be >= 0, got {self.omega_d}")
        if not self.eta > 0 or (self.eta_d is not None and not self.eta_d > 0):
            raise ConfigError("learning rates must be positive")
        for name in ("init_mse_iters", "mge_iters", "disc_init_iters", "joint_iters", "ref_iters"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.phi not in PHIS:
            raise ConfigError(f"unknown feature function {self.phi!r}; choose from {PHIS}")
        self.gen_hidden = [int(h) for h in self.gen_hidden]
        self.disc_hidden = [int(h) for h in self.disc_hidden]

    @property
    def disc_eta(self) -> float:
        return self.eta if self.eta_d is None else self.eta_d

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["gan"]["labels"] = list(d["gan"]["labels"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class ScaleNormalizer:
    """Corpus expectations of the generation and adversarial losses."""

    e_mge: float | None = None
    e_adv: float | None = None

    @property
    def estimated(self) -> bool:
        return self.e_mge is not None and self.e_adv is not None

    @property
    def ratio(self) -> float:
        if not self.estimated:
            raise UsageError("scale normalizer has not been estimated")
        # the adversarial loss can be negative (KL, W-GAN); its magnitude sets the scale
        return self.e_mge / max(abs(self.e_adv), 1e-12)


# -- feature function ----------------------------------------------------------

def apply_phi(phi: str, y: np.ndarray, window: sp.spmatrix | None = None) -> np.ndarray:
    """Discriminator features of a static (T, D) sequence."""
    if phi == "identity":
        return y
    if phi == "static_delta":
        if window is None:
            raise UsageError("static_delta features need the window matrix for this length")
        return (window @ y.ravel()).reshape(y.shape[0], -1)
    raise ConfigError(f"unknown feature function {phi!r}")


def phi_backprop(phi: str, upstream: np.ndarray, window: sp.spmatrix | None = None) -> np.ndarray:
    """Pull a gradient w.r.t. phi(y) back to y."""
    if phi == "identity":
        return upstream
    if phi == "static_delta":
        if window is None:
            raise UsageError("static_delta features need the window matrix for this length")
        T = upstream.shape[0]
        return (window.T @ upstream.ravel()).reshape(T, -1)
    raise ConfigError(f"unknown feature function {phi!r}")


def phi_dim(phi: str, D: int) -> int:
    return D if phi == "identity" else 3 * D


def scores(disc: Mlp, feats: np.ndarray) -> np.ndarray:
    return forward(disc, feats)[:, 0]


# -- losses and single steps -------------------------------------------------------

def combined_loss(y, yhat, disc_scores, cfg: TrainConfig, norm: ScaleNormalizer) -> float:
    """L_MGE + omega_d * (E_MGE / E_ADV) * L_ADV for one utterance."""
    l_mge = mge_loss(y, yhat)
    if cfg.omega_d == 0:
        return l_mge
    if not norm.estimated:
        raise UsageError("omega_d > 0 requires an estimated scale normalizer")
    l_adv, _ = cfg.gan.adv_loss(disc_scores)
    return l_mge + cfg.omega_d * norm.ratio * l_adv


def adversarial_grad(disc: Mlp, yhat: np.ndarray, cfg: TrainConfig, window=None) -> tuple[float, np.ndarray]:
    """L_ADV and its gradient w.r.t. the generated static trajectory (disc fixed)."""
    feats = apply_phi(cfg.phi, yhat, window)
    l_adv, g = cfg.gan.adv_loss(scores(disc, feats))
    _, g_in = backward(disc, feats, g[:, None])
    return l_adv, phi_backprop(cfg.phi, g_in, window)


def generator_grad(G: Mlp, x, y, system, cfg: TrainConfig, disc: Mlp | None = None, norm: ScaleNormalizer | None = None):
    """Gradient of the combined loss w.r.t. acoustic-model parameters.

    Returns (grads, l_mge, l_adv); the adversarial path is skipped when
    omega_d is zero or no discriminator is given.
    """
    Yhat = forward(G, x)
    yhat = mlpg_generate(system, Yhat)
    l_mge = mge_loss(y, yhat)
    grad_y = mse_grad(y, yhat)
    l_adv = float("nan")
    if disc is not None and cfg.omega_d > 0:
        if norm is None or not norm.estimated:
            raise UsageError("omega_d > 0 requires an estimated scale normalizer")
        l_adv, g_adv = adversarial_grad(disc, yhat, cfg, system.window)
        grad_y = grad_y + (cfg.omega_d * norm.ratio) * g_adv
    grads, _ = backward(G, x, backprop_through_mlpg(system, grad_y))
    return grads, l_mge, l_adv


def generator_step(G, x, y, system, cfg, disc=None, norm=None):
    grads, l_mge, l_adv = generator_grad(G, x, y, system, cfg, disc, norm)
    return sgd_step(G, grads, cfg.eta), l_mge, l_adv


def discriminator_step(disc: Mlp, nat: np.ndarray, gen: np.ndarray, variant: GanVariant, eta: float):
    """One update of the discriminator on natural vs generated features."""
    l_d, g_nat, g_gen = variant.d_loss(scores(disc, nat), scores(disc, gen))
    grads_nat, _ = backward(disc, nat, g_nat[:, None])
    grads_gen, _ = backward(disc, gen, g_gen[:, None])
    disc = sgd_step(disc, grads_nat + grads_gen, eta)
    if variant.clips:
        disc = clip_weights(disc, variant.clip_bound)
    return disc, l_d


def mse_step(G: Mlp, x, Y, eta: float):
    Yhat = forward(G, x)
    grads, _ = backward(G, x, mse_grad(Y, Yhat))
    return sgd_step(G, grads, eta), mse_loss(Y, Yhat)


# -- training ---------------------------------------------------------------------

class TrainingDiverged(NumericalError):
    def __init__(self, message: str, generator: Mlp, discriminator: Mlp | None, history: list[dict]):
        super().__init__(message)
        self.generator = generator
        self.discriminator = discriminator
        self.history = history


@dataclass
class TrainResult:
    generator: Mlp
    discriminator: Mlp
    reference: Mlp  # frozen discriminator trained on natural vs MGE-generated parameters
    history: list[dict]
    variance: np.ndarray  # static-dynamic variances used by parameter generation


def _check_finite(value: float, what: str, G, D, history):
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite {what} ({value})", G, D, history)


def _check_pairs(pairs: Sequence[Pair]):
    if not pairs:
        raise UsageError("training corpus is empty")
    in_dim, out_dim = pairs[0][0].shape[1], pairs[0][1].shape[1]
    for x, y in pairs:
        if x.shape[1] != in_dim or y.shape[1] != out_dim or x.shape[0] != y.shape[0]:
            raise ConfigError("inconsistent dimensions across the corpus")
    return in_dim, out_dim


def init_models(cfg: TrainConfig, in_dim: int, out_dim: int) -> tuple[Mlp, Mlp]:
    G = init_mlp([in_dim, *cfg.gen_hidden, 3 * out_dim], np.random.default_rng([cfg.seed, 0]), "linear")
    D = init_mlp([phi_dim(cfg.phi, out_dim), *cfg.disc_hidden, 1], np.random.default_rng([cfg.seed, 1]), "logit")
    if cfg.gan.clips:
        D = clip_weights(D, cfg.gan.clip_bound)
    return G, D


def generate_all(G: Mlp, pairs: Sequence[Pair], systems: SystemCache) -> list[np.ndarray]:
    return [mlpg_generate(systems(x.shape[0]), forward(G, x)) for x, _ in pairs]


def estimate_scale(pairs: Sequence[Pair], G: Mlp, D: Mlp, cfg: TrainConfig, systems: SystemCache) -> ScaleNormalizer:
    """Corpus means of L_MGE and L_ADV under the current models."""
    l_mge, l_adv = [], []
    for (x, y), yhat in zip(pairs, generate_all(G, pairs, systems)):
        l_mge.append(mge_loss(y, yhat))
        feats = apply_phi(cfg.phi, yhat, systems(x.shape[0]).window)
        l_adv.append(cfg.gan.adv_loss(scores(D, feats))[0])
    return ScaleNormalizer(float(np.mean(l_mge)), float(np.mean(l_adv)))


def spoof_rate_frames(disc: Mlp, feats_list: Sequence[np.ndarray]) -> float:
    spoofed = sum(int(np.sum(scores(disc, f) > 0.0)) for f in feats_list)
    total = sum(f.shape[0] for f in feats_list)
    return spoofed / total


def evaluate(pairs: Sequence[Pair], G: Mlp, D: Mlp, reference: Mlp | None, cfg: TrainConfig, systems: SystemCache) -> dict:
    """Corpus-mean losses under the current models, plus the spoofing rate against ``reference``."""
    l_mge, l_adv, l_d, feats_gen = [], [], [], []
    for (x, y), yhat in zip(pairs, generate_all(G, pairs, systems)):
        W = systems(x.shape[0]).window
        f_gen, f_nat = apply_phi(cfg.phi, yhat, W), apply_phi(cfg.phi, y, W)
        s_gen = scores(D, f_gen)
        l_mge.append(mge_loss(y, yhat))
        l_adv.append(cfg.gan.adv_loss(s_gen)[0])
        l_d.append(cfg.gan.d_loss(scores(D, f_nat), s_gen)[0])
        feats_gen.append(f_gen)
    return {
        "l_mge": float(np.mean(l_mge)),
        "l_adv": float(np.mean(l_adv)),
        "l_d": float(np.mean(l_d)),
        "spoofing_rate": spoof_rate_frames(reference if reference is not None else D, feats_gen),
    }


def train_mge(G: Mlp, pairs: Sequence[Pair], systems: SystemCache, cfg: TrainConfig, iters: int) -> Mlp:
    """MGE-only training; the reference trajectory for omega_d = 0."""
    for _ in range(iters):
        for x, y in pairs:
            G, _, _ = generator_step(G, x, y, systems(x.shape[0]), cfg)
    return G


def train(
    pairs: Sequence[Pair],
    cfg: TrainConfig,
    callback: Callable[[dict], None] | None = None,
    init: tuple[Mlp, Mlp] | None = None,
) -> TrainResult:
    """Run the full schedule on (input, normalised static target) pairs."""
    in_dim, out_dim = _check_pairs(pairs)
    G, D = init if init is not None else init_models(cfg, in_dim, out_dim)
    D0 = D
    sd_targets = [static_dynamic(y) for _, y in pairs]
    var = estimate_covariance(sd_targets)
    systems = SystemCache(var)
    history: list[dict] = []

    def log(phase: str, it: int, metrics: dict):
        rec = {"phase": phase, "iteration": it}
        rec.update({k: metrics.get(k) for k in HISTORY_FIELDS[2:]})
        history.append(rec)
        if callback is not None:
            callback(rec)

    for it in range(1, cfg.init_mse_iters + 1):
        losses = []
        for (x, _), Y in zip(pairs, sd_targets):
            G, l = mse_step(G, x, Y, cfg.eta)
            _check_finite(l, "MSE loss", G, D, history)
            losses.append(l)
        log("mse", it, {"l_mge": float(np.mean(losses))})

    for it in range(1, cfg.mge_iters + 1):
        losses = []
        for x, y in pairs:
            G, l, _ = generator_step(G, x, y, systems(x.shape[0]), cfg)
            _check_finite(l, "generation loss", G, D, history)
            losses.append(l)
        log("mge", it, {"l_mge": float(np.mean(losses))})

    reference = train_discriminator(G, D0, pairs, systems, cfg, cfg.ref_iters) if cfg.ref_iters else None
    for it in range(1, cfg.disc_init_iters + 1):
        D = _disc_pass(G, D, pairs, systems, cfg, history)
        log("disc", it, evaluate(pairs, G, D, reference, cfg, systems))
    if reference is None:
        reference = D

    for it in range(1, cfg.joint_iters + 1):
        norm = estimate_scale(pairs, G, D, cfg, systems) if cfg.omega_d > 0 else ScaleNormalizer()
        for x, y in pairs:
            system = systems(x.shape[0])
            yhat = mlpg_generate(system, forward(G, x))
            D, l_d = discriminator_step(
                D, apply_phi(cfg.phi, y, system.window), apply_phi(cfg.phi, yhat, system.window), cfg.gan, cfg.disc_eta
            )
            _check_finite(l_d, "discriminator loss", G, D, history)
            G, l_mge, l_adv = generator_step(G, x, y, system, cfg, D, norm)
            _check_finite(l_mge, "generation loss", G, D, history)
            if cfg.omega_d > 0:
                _check_finite(l_adv, "adversarial loss", G, D, history)
        metrics = evaluate(pairs, G, D, reference, cfg, systems)
        for k in ("l_mge", "l_adv", "l_d"):
            _check_finite(metrics[k], k, G, D, history)
        log("joint", it, metrics)

    return TrainResult(G, D, reference, history, var)


def _disc_pass(G, D, pairs, systems, cfg, history):
    for x, y in pairs:
        system = systems(x.shape[0])
        yhat = mlpg_generate(system, forward(G, x))
        D, l_d = discriminator_step(
            D, apply_phi(cfg.phi, y, system.window), apply_phi(cfg.phi, yhat, system.window), cfg.gan, cfg.disc_eta
        )
        _check_finite(l_d, "discriminator loss", G, D, history)
    return D


def train_discriminator(G: Mlp, D: Mlp, pairs: Sequence[Pair], systems: SystemCache, cfg: TrainConfig, iters: int) -> Mlp:
    """Discriminator-only passes with the acoustic model frozen."""
    for _ in range(iters):
        D = _disc_pass(G, D, pairs, systems, cfg, [])
    return D
