"""Experiment drivers shared by scripts/ and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from advspss.data import gen_corpus, gen_duration_corpus
from advspss.diagnostics import corpus_gv
from advspss.divergence import Histogram, divergence_oracle, gaussian
from advspss.duration import duration_stats, train_duration
from advspss.gans import GanVariant, gan_d_loss
from advspss.mlpg import SystemCache
from advspss.net import Mlp, backward, forward, init_mlp, sgd_step
from advspss.trainer import TrainConfig, TrainResult, evaluate, generate_all, train

OMEGA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass
class OmegaSweep:
    omegas: list[float]
    results: dict[float, TrainResult]
    table: dict[float, dict]  # eval-split metrics per omega
    gv_natural: np.ndarray
    gv: dict[float, np.ndarray] = field(default_factory=dict)


def omega_sweep(seed: int = 0, omegas=OMEGA_GRID, cfg: TrainConfig | None = None, corpus=None) -> OmegaSweep:
    """Train one model per omega and score all of them against one frozen reference.

    The reference comes from the first run; every run shares the same MGE
    stage, so the reference is identical across runs anyway.
    """
    corpus = corpus if corpus is not None else gen_corpus(seed)
    base = cfg if cfg is not None else TrainConfig(seed=seed)
    train_pairs, eval_pairs = corpus.pairs("train"), corpus.pairs("eval")
    results, table, gv = {}, {}, {}
    reference = None
    for w in omegas:
        run_cfg = TrainConfig.from_dict({**base.to_dict(), "omega_d": w})
        res = train(train_pairs, run_cfg)
        reference = reference if reference is not None else res.reference
        systems = SystemCache(res.variance)
        table[w] = evaluate(eval_pairs, res.generator, res.discriminator, reference, run_cfg, systems)
        gv[w] = corpus_gv(generate_all(res.generator, eval_pairs, systems))
        results[w] = res
    return OmegaSweep(list(omegas), results, table, corpus_gv([y for _, y in eval_pairs]), gv)


def convergence_config(seed: int = 0) -> TrainConfig:
    """100 joint iterations from a randomly initialised acoustic model.

    The discriminator is first trained against that untrained model, and the
    acoustic model moves slower than the discriminator.
    """
    return TrainConfig(
        seed=seed,
        init_mse_iters=0,
        mge_iters=0,
        ref_iters=0,
        disc_init_iters=40,
        joint_iters=100,
        eta=0.01,
        eta_d=0.05,
    )


def convergence_run(seed: int = 0) -> list[dict]:
    corpus = gen_corpus(seed, residual_scale=0.3)
    res = train(corpus.pairs("train"), convergence_config(seed))
    return [h for h in res.history if h["phase"] == "joint"]


def duration_comparison(seed: int = 0, cfg: TrainConfig | None = None) -> dict:
    """Eval-split duration statistics for the MSE baseline and adversarial training at two levels."""
    train_set, eval_set = gen_duration_corpus(seed)
    base = cfg if cfg is not None else TrainConfig(seed=seed)
    out = {}
    for name, level, w in (("mse", "isochrony", 0.0), ("phoneme", "phoneme", 1.0), ("isochrony", "isochrony", 1.0)):
        run_cfg = TrainConfig.from_dict({**base.to_dict(), "omega_d": w})
        res = train_duration(train_set, run_cfg, level)
        out[name] = duration_stats(res.model, eval_set, res.scaler)
    return out


def train_histogram_discriminator(p: Histogram, q: Histogram, rng, hidden: int = 16, steps: int = 400, n: int = 2000, eta: float = 0.5) -> Mlp:
    """Fit a 1-D GAN discriminator on samples of p (natural) and q (generated)."""
    D = init_mlp([1, hidden, 1], rng, "logit")
    xp, xq = p.sample(n, rng)[:, None], q.sample(n, rng)[:, None]
    for _ in range(steps):
        _, gn, gg = gan_d_loss(forward(D, xp)[:, 0], forward(D, xq)[:, 0])
        g1, _ = backward(D, xp, gn[:, None])
        g2, _ = backward(D, xq, gg[:, None])
        D = sgd_step(D, g1 + g2, eta)
    return D


def variational_gap(seed: int, p: Histogram, q: Histogram, n_eval: int = 20000) -> tuple[float, float]:
    """(-L_D of a trained discriminator on fresh samples, 2 JS(p||q) - log 4)."""
    rng = np.random.default_rng(seed)
    D = train_histogram_discriminator(p, q, rng)
    xp, xq = p.sample(n_eval, rng)[:, None], q.sample(n_eval, rng)[:, None]
    estimate = -gan_d_loss(forward(D, xp)[:, 0], forward(D, xq)[:, 0])[0]
    return float(estimate), float(2 * divergence_oracle("js", p, q) - np.log(4.0))


def default_histograms() -> tuple[Histogram, Histogram]:
    return gaussian(0.0, 1.0, -6, 6, 1024), gaussian(1.5, 0.7, -6, 6, 1024)


def wgan_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(seed=seed, gan=GanVariant("wasserstein"))

