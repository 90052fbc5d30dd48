"""Discriminator and adversarial losses for six GAN variants.

All losses act on raw discriminator scores (one per frame) and return the
loss value together with its exact gradient w.r.t. the scores. Discriminator
losses return ``(value, grad_natural, grad_generated)``; adversarial losses
return ``(value, grad_generated)``. Natural and generated sequences may have
different lengths, each mean uses its own length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from advspss.errors import ConfigError

KINDS = ("gan", "kl", "rkl", "js", "wasserstein", "least_squares")
ALIASES = {"w": "wasserstein", "ls": "least_squares"}
LOG2 = float(np.log(2.0))


def _scores(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64).ravel()
    if s.size == 0:
        raise ConfigError("score sequence is empty")
    return s


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    # log(1/(1+exp(-x))) without overflow
    return -np.logaddexp(0.0, -x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# -- original GAN (cross-entropy) -----------------------------------------

def gan_d_loss(nat, gen):
    nat, gen = _scores(nat), _scores(gen)
    # -log sig(D(y)) - log(1 - sig(D(yhat))) ; 1 - sig(x) = sig(-x)
    value = -log_sigmoid(nat).mean() - log_sigmoid(-gen).mean()
    return float(value), -sigmoid(-nat) / nat.size, sigmoid(gen) / gen.size


def gan_adv_loss(gen):
    gen = _scores(gen)
    return float(-log_sigmoid(gen).mean()), -sigmoid(-gen) / gen.size


# -- KL-GAN, f(r) = r log r -------------------------------------------------

def kl_d_loss(nat, gen):
    nat, gen = _scores(nat), _scores(gen)
    e = np.exp(gen - 1.0)
    value = -nat.mean() + e.mean()
    return float(value), np.full(nat.size, -1.0 / nat.size), e / gen.size


def kl_adv_loss(gen):
    gen = _scores(gen)
    return float(-gen.mean()), np.full(gen.size, -1.0 / gen.size)


# -- reversed KL, f(r) = -log r ---------------------------------------------

def rkl_d_loss(nat, gen):
    nat, gen = _scores(nat), _scores(gen)
    e = np.exp(-nat)
    value = e.mean() + (gen - 1.0).mean()
    return float(value), -e / nat.size, np.full(gen.size, 1.0 / gen.size)


def rkl_adv_loss(gen):
    gen = _scores(gen)
    e = np.exp(-gen)
    return float(e.mean()), -e / gen.size


# -- JS-GAN (exact Jensen-Shannon) --------------------------------------------

def js_d_loss(nat, gen):
    nat, gen = _scores(nat), _scores(gen)
    # -log(2 sig(D(y))) - log(2 - 2 sig(D(yhat)))
    value = -(LOG2 + log_sigmoid(nat)).mean() - (LOG2 + log_sigmoid(-gen)).mean()
    return float(value), -sigmoid(-nat) / nat.size, sigmoid(gen) / gen.size


def js_adv_loss(gen):
    gen = _scores(gen)
    return float(-(LOG2 + log_sigmoid(gen)).mean()), -sigmoid(-gen) / gen.size


# -- Wasserstein GAN ------------------------------------------------------------

def w_d_loss(nat, gen):
    nat, gen = _scores(nat), _scores(gen)
    value = -nat.mean() + gen.mean()
    return float(value), np.full(nat.size, -1.0 / nat.size), np.full(gen.size, 1.0 / gen.size)


def w_adv_loss(gen):
    gen = _scores(gen)
    return float(-gen.mean()), np.full(gen.size, -1.0 / gen.size)


# -- least-squares GAN ------------------------------------------------------------

def ls_d_loss(nat, gen, a: float = 0.0, b: float = 1.0):
    nat, gen = _scores(nat), _scores(gen)
    value = 0.5 * np.mean((nat - b) ** 2) + 0.5 * np.mean((gen - a) ** 2)
    return float(value), (nat - b) / nat.size, (gen - a) / gen.size


def ls_adv_loss(gen, c: float = 1.0):
    gen = _scores(gen)
    return float(0.5 * np.mean((gen - c) ** 2)), (gen - c) / gen.size


@dataclass(frozen=True)
class GanVariant:
    """Choice of discriminator/adversarial loss pair with its hyper-parameters."""

    kind: str = "gan"
    clip_bound: float = 0.01
    labels: tuple[float, float, float] = (0.0, 1.0, 1.0)

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ConfigError(f"unknown GAN variant {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "labels", tuple(float(v) for v in self.labels))
        if len(self.labels) != 3:
            raise ConfigError("least-squares labels must be three numbers a,b,c")
        if kind == "wasserstein" and not self.clip_bound > 0:
            raise ConfigError(f"clip bound must be positive, got {self.clip_bound}")

    @property
    def clips(self) -> bool:
        return self.kind == "wasserstein"

    def d_loss(self, nat, gen):
        if self.kind == "least_squares":
            a, b, _ = self.labels
            return ls_d_loss(nat, gen, a, b)
        return _D_LOSSES[self.kind](nat, gen)

    def adv_loss(self, gen):
        if self.kind == "least_squares":
            return ls_adv_loss(gen, self.labels[2])
        return _ADV_LOSSES[self.kind](gen)


_D_LOSSES: dict[str, Callable] = {
    "gan": gan_d_loss,
    "kl": kl_d_loss,
    "rkl": rkl_d_loss,
    "js": js_d_loss,
    "wasserstein": w_d_loss,
}
_ADV_LOSSES: dict[str, Callable] = {
    "gan": gan_adv_loss,
    "kl": kl_adv_loss,
    "rkl": rkl_adv_loss,
    "js": js_adv_loss,
    "wasserstein": w_adv_loss,
}
