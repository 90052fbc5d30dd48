"""Duration models with the adversarial loss applied at the isochrony level.

Phoneme durations are summed into isochrony units (morae, syllables) by a
0/1 partition matrix; the discriminator sees one unit duration at a time and
its gradient returns to phonemes through the transposed matrix. The squared
error term always stays at phoneme level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from advspss.data import DurationUtterance
from advspss.errors import ConfigError, UsageError
from advspss.net import Mlp, backward, clip_weights, forward, init_mlp, sgd_step
from advspss.trainer import ScaleNormalizer, TrainConfig, TrainingDiverged, discriminator_step, scores

LEVELS = ("phoneme", "isochrony")


@dataclass(frozen=True)
class IsochronyMap:
    groups: tuple[tuple[int, ...], ...]
    n_phonemes: int

    def __post_init__(self):
        seen = sorted(i for g in self.groups for i in g)
        if any(len(g) == 0 for g in self.groups):
            raise ConfigError("isochrony units must contain at least one phoneme")
        if seen != list(range(self.n_phonemes)):
            raise ConfigError("groups must partition the phoneme indices exactly once")

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]], n_phonemes: int | None = None) -> "IsochronyMap":
        groups = tuple(tuple(int(i) for i in g) for g in groups)
        if n_phonemes is None:
            n_phonemes = sum(len(g) for g in groups)
        return cls(groups, n_phonemes)

    @classmethod
    def identity(cls, n_phonemes: int) -> "IsochronyMap":
        return cls(tuple((i,) for i in range(n_phonemes)), n_phonemes)

    @property
    def n_units(self) -> int:
        return len(self.groups)

    @property
    def matrix(self) -> np.ndarray:
        A = np.zeros((self.n_units, self.n_phonemes))
        for m, g in enumerate(self.groups):
            A[m, list(g)] = 1.0
        return A


def aggregate(imap: IsochronyMap, phoneme_dur: np.ndarray) -> np.ndarray:
    d = np.asarray(phoneme_dur, dtype=np.float64).ravel()
    if d.size != imap.n_phonemes:
        raise ConfigError(f"{d.size} durations for a map over {imap.n_phonemes} phonemes")
    return imap.matrix @ d


def aggregate_backprop(imap: IsochronyMap, upstream: np.ndarray) -> np.ndarray:
    u = np.asarray(upstream, dtype=np.float64).ravel()
    if u.size != imap.n_units:
        raise ConfigError(f"{u.size} unit gradients for a map with {imap.n_units} units")
    return imap.matrix.T @ u


@dataclass(frozen=True)
class DurationScaler:
    """Affine scaling between frames and model units for phonemes and units."""

    mean: float
    std: float
    unit_mean: float
    unit_std: float

    @classmethod
    def fit(cls, items: Sequence[DurationUtterance]) -> "DurationScaler":
        d = np.concatenate([u.durations for u in items])
        units = np.concatenate([aggregate(IsochronyMap.from_groups(u.groups), u.durations) for u in items])
        return cls(float(d.mean()), float(max(d.std(), 1e-8)), float(units.mean()), float(max(units.std(), 1e-8)))


@dataclass
class DurationResult:
    model: Mlp
    discriminator: Mlp
    history: list[dict]
    scaler: DurationScaler


def predict_durations(model: Mlp, x: np.ndarray, scaler: DurationScaler) -> np.ndarray:
    """Phoneme durations in frames (unclamped)."""
    return scaler.mean + scaler.std * forward(model, x)[:, 0]


def _disc_input(d_frames: np.ndarray, imap: IsochronyMap, level: str, scaler: DurationScaler) -> np.ndarray:
    if level == "phoneme":
        return ((d_frames - scaler.mean) / scaler.std)[:, None]
    return ((aggregate(imap, d_frames) - scaler.unit_mean) / scaler.unit_std)[:, None]


def _disc_backprop(g_in: np.ndarray, imap: IsochronyMap, level: str, scaler: DurationScaler) -> np.ndarray:
    """Gradient w.r.t. the normalised model output from one w.r.t. discriminator input."""
    if level == "phoneme":
        return g_in[:, 0]
    return aggregate_backprop(imap, g_in[:, 0]) * (scaler.std / scaler.unit_std)


def _prepare(items):
    return [(u.x, u.durations, IsochronyMap.from_groups(u.groups)) for u in items]


def duration_losses(model, disc, items, scaler, cfg: TrainConfig, level: str) -> dict:
    l_mse, l_adv, l_d = [], [], []
    for x, d, imap in items:
        z = forward(model, x)[:, 0]
        z_nat = (d - scaler.mean) / scaler.std
        l_mse.append(float(np.mean((z - z_nat) ** 2)))
        dh = scaler.mean + scaler.std * z
        s_gen = scores(disc, _disc_input(dh, imap, level, scaler))
        s_nat = scores(disc, _disc_input(d, imap, level, scaler))
        l_adv.append(cfg.gan.adv_loss(s_gen)[0])
        l_d.append(cfg.gan.d_loss(s_nat, s_gen)[0])
    return {"l_mse": float(np.mean(l_mse)), "l_adv": float(np.mean(l_adv)), "l_d": float(np.mean(l_d))}


def train_duration(
    corpus: Sequence[DurationUtterance],
    cfg: TrainConfig,
    level: str = "isochrony",
    hidden: Sequence[int] | None = None,
    disc_hidden: Sequence[int] | None = None,
) -> DurationResult:
    """MSE initialisation, discriminator initialisation, then the joint loop.

    The schedule reuses ``cfg``: ``init_mse_iters + mge_iters`` MSE passes,
    ``disc_init_iters`` discriminator passes and ``joint_iters`` joint passes.
    The MSE is taken on normalised phoneme durations.
    """
    if level == "mora":
        level = "isochrony"
    if level not in LEVELS:
        raise ConfigError(f"unknown duration level {level!r}")
    if not corpus:
        raise UsageError("duration corpus is empty")
    items = _prepare(corpus)
    scaler = DurationScaler.fit(corpus)
    in_dim = items[0][0].shape[1]
    hidden = list(cfg.gen_hidden if hidden is None else hidden)
    disc_hidden = list(cfg.disc_hidden if disc_hidden is None else disc_hidden)
    model = init_mlp([in_dim, *hidden, 1], np.random.default_rng([cfg.seed, 2]), "linear")
    disc = init_mlp([1, *disc_hidden, 1], np.random.default_rng([cfg.seed, 3]), "logit")
    if cfg.gan.clips:
        disc = clip_weights(disc, cfg.gan.clip_bound)
    history: list[dict] = []

    def check(v, what):
        if not np.isfinite(v):
            raise TrainingDiverged(f"non-finite {what} ({v})", model, disc, history)

    def mse_pass():
        nonlocal model
        for x, d, _ in items:
            z = forward(model, x)[:, 0]
            g = 2.0 / z.size * (z - (d - scaler.mean) / scaler.std)
            grads, _ = backward(model, x, g[:, None])
            model = sgd_step(model, grads, cfg.eta)

    def disc_pass():
        nonlocal disc
        for x, d, imap in items:
            dh = predict_durations(model, x, scaler)
            disc, l_d = discriminator_step(
                disc, _disc_input(d, imap, level, scaler), _disc_input(dh, imap, level, scaler), cfg.gan, cfg.disc_eta
            )
            check(l_d, "discriminator loss")

    for it in range(1, cfg.init_mse_iters + cfg.mge_iters + 1):
        mse_pass()
        history.append({"phase": "mse", "iteration": it, **duration_losses(model, disc, items, scaler, cfg, level)})
    for it in range(1, cfg.disc_init_iters + 1):
        disc_pass()
        history.append({"phase": "disc", "iteration": it, **duration_losses(model, disc, items, scaler, cfg, level)})

    for it in range(1, cfg.joint_iters + 1):
        if cfg.omega_d == 0:
            # adversarial path skipped: the model sees exactly the MSE updates
            disc_pass()
            mse_pass()
        else:
            m = duration_losses(model, disc, items, scaler, cfg, level)
            norm = ScaleNormalizer(m["l_mse"], m["l_adv"])
            for x, d, imap in items:
                z = forward(model, x)[:, 0]
                dh = scaler.mean + scaler.std * z
                disc, l_d = discriminator_step(
                    disc, _disc_input(d, imap, level, scaler), _disc_input(dh, imap, level, scaler), cfg.gan, cfg.disc_eta
                )
                check(l_d, "discriminator loss")
                g = 2.0 / z.size * (z - (d - scaler.mean) / scaler.std)
                feats = _disc_input(dh, imap, level, scaler)
                _, g_s = cfg.gan.adv_loss(scores(disc, feats))
                _, g_in = backward(disc, feats, g_s[:, None])
                g = g + cfg.omega_d * norm.ratio * _disc_backprop(g_in, imap, level, scaler)
                grads, _ = backward(model, x, g[:, None])
                model = sgd_step(model, grads, cfg.eta)
        m = duration_losses(model, disc, items, scaler, cfg, level)
        for k, v in m.items():
            check(v, k)
        history.append({"phase": "joint", "iteration": it, **m})
    return DurationResult(model, disc, history, scaler)


def duration_stats(model: Mlp, corpus: Sequence[DurationUtterance], scaler: DurationScaler) -> dict:
    """Mean/variance of natural and generated durations at phoneme and unit level.

    Generated durations are clamped at zero here, never inside the loss.
    """
    nat_p, gen_p, nat_u, gen_u = [], [], [], []
    for u in corpus:
        imap = IsochronyMap.from_groups(u.groups)
        dh = np.maximum(predict_durations(model, u.x, scaler), 0.0)
        nat_p.append(u.durations)
        gen_p.append(dh)
        nat_u.append(aggregate(imap, u.durations))
        gen_u.append(aggregate(imap, dh))
    cat = np.concatenate
    return {
        "phoneme": {"natural": _mv(cat(nat_p)), "generated": _mv(cat(gen_p))},
        "isochrony": {"natural": _mv(cat(nat_u)), "generated": _mv(cat(gen_u))},
    }


def _mv(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.var())
