"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import contextlib
import io
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from advspss import trainer
from advspss.cli import main as cli_main
from advspss.data import gen_corpus, save_corpus
from advspss.divergence import divergence_oracle, gaussian, point_masses
from advspss.duration import IsochronyMap, aggregate, aggregate_backprop
from advspss.experiments import (
    convergence_run,
    default_histograms,
    duration_comparison,
    omega_sweep,
    variational_gap,
    wgan_config,
)
from advspss.gans import GanVariant
from advspss.mlpg import (
    MlpgSystem,
    SystemCache,
    estimate_covariance,
    mge_grad_wrt_Yhat,
    mge_loss,
    mlpg_generate,
    mse_grad,
    mse_loss,
    static_dynamic,
)
from advspss.net import Layer, Mlp, forward, init_mlp
from advspss.trainer import ScaleNormalizer, TrainConfig, apply_phi, combined_loss, generator_grad, scores, train, train_mge
from conftest import central_diff, max_rel_err

_sweep_cache = {}


REPORT_LINES: list[str] = []  # collected for the pytest terminal summary


def report(n, ok, detail):
    line = f"CRITERION {n:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    REPORT_LINES.append(line)
    if __name__ == "__main__":
        print(line, flush=True)
    return ok


def sweep():
    if "s" not in _sweep_cache:
        t = time.perf_counter()
        _sweep_cache["s"] = omega_sweep(seed=0, omegas=(0.0, 0.2, 1.0))
        _sweep_cache["t"] = time.perf_counter() - t
    return _sweep_cache["s"], _sweep_cache["t"]


# -- 1 ---------------------------------------------------------------------------

def criterion_1():
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_y = worst_rw = 0.0
    for _ in range(20):
        T, D = int(rng.integers(1, 33)), int(rng.integers(1, 6))
        var = rng.uniform(0.05, 5.0, size=3 * D)
        system = MlpgSystem.build(T, var)
        Yhat = rng.normal(size=(T, 3 * D))
        # generic weighted least squares: scale rows by Sigma^-1/2 and solve
        w = 1.0 / np.sqrt(system.covariance)
        A = system.window.toarray() * w[:, None]
        ref, *_ = np.linalg.lstsq(A, Yhat.ravel() * w, rcond=None)
        worst_y = max(worst_y, float(np.max(np.abs(mlpg_generate(system, Yhat).ravel() - ref))))
        worst_rw = max(worst_rw, float(np.max(np.abs(system.generation @ system.window.toarray() - np.eye(T * D)))))
    dt = time.perf_counter() - t
    ok = worst_y < 1e-8 and worst_rw < 1e-10 and dt < 5.0
    return report(1, ok, f"max |y - y_wls| = {worst_y:.2e}, max |RW - I| = {worst_rw:.2e}, {dt:.2f} s")


# -- 2 ---------------------------------------------------------------------------

def _shift(net, delta=0.05):
    return Mlp(tuple(Layer(l.weight, l.bias + delta, l.activation) for l in net.layers))


def criterion_2():
    t = time.perf_counter()
    rng = np.random.default_rng(7)
    local, e2e = {}, {}

    Y, Yh = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    local["mse"] = max_rel_err(mse_grad(Y, Yh), central_diff(lambda z: mse_loss(Y, z), Yh))

    system = MlpgSystem.build(9, rng.uniform(0.3, 2.0, 6))
    y, Yhat = rng.normal(size=(9, 2)), rng.normal(size=(9, 6))
    local["mge (R' path)"] = max_rel_err(
        mge_grad_wrt_Yhat(y, mlpg_generate(system, Yhat), system),
        central_diff(lambda z: mge_loss(y, mlpg_generate(system, z)), Yhat),
    )

    for kind in ("gan", "kl", "rkl", "js", "wasserstein", "least_squares"):
        v = GanVariant(kind)
        n, g = rng.normal(size=7), rng.normal(size=5)
        _, gn, gg = v.d_loss(n, g)
        local[f"{kind} L_D"] = max(
            max_rel_err(gn, central_diff(lambda z: v.d_loss(z, g)[0], n)),
            max_rel_err(gg, central_diff(lambda z: v.d_loss(n, z)[0], g)),
        )
        local[f"{kind} L_ADV"] = max_rel_err(v.adv_loss(g)[1], central_diff(lambda z: v.adv_loss(z)[0], g))

    imap = IsochronyMap.from_groups([[0, 1], [2], [3, 4, 5]])
    u = rng.normal(size=3)
    local["duration aggregation"] = max_rel_err(
        aggregate_backprop(imap, u), central_diff(lambda d: float(aggregate(imap, d) @ u), rng.normal(size=6))
    )

    for phi in ("identity", "static_delta"):
        for kind in ("gan", "least_squares", "wasserstein"):
            cfg = TrainConfig(omega_d=0.8, phi=phi, gan=GanVariant(kind))
            G = _shift(init_mlp([3, 6, 6], rng))
            D = _shift(init_mlp([trainer.phi_dim(phi, 2), 5, 1], rng, "logit"))
            x = rng.normal(size=(9, 3))
            norm = ScaleNormalizer(1.1, 0.7)
            grads, _, _ = generator_grad(G, x, y, system, cfg, D, norm)

            def loss(w0):
                net = Mlp((Layer(w0, G.layers[0].bias, "relu"), G.layers[1]))
                yh = mlpg_generate(system, forward(net, x))
                return combined_loss(y, yh, scores(D, apply_phi(phi, yh, system.window)), cfg, norm)

            e2e[f"combined {kind}/{phi}"] = max_rel_err(grads.weights[0], central_diff(loss, G.layers[0].weight))

    dt = time.perf_counter() - t
    worst_local = max(local.values())
    worst_e2e = max(e2e.values())
    ok = worst_local < 1e-4 and worst_e2e < 1e-3 and dt < 30.0
    return report(
        2, ok, f"{len(local)} local checks max rel err {worst_local:.1e}, {len(e2e)} end-to-end max {worst_e2e:.1e}, {dt:.1f} s"
    )


# -- 3, 4 ------------------------------------------------------------------------

def criterion_3():
    s, dt = sweep()
    t0, t2, t1 = s.table[0.0], s.table[0.2], s.table[1.0]
    loss_ok = t1["l_mge"] >= t0["l_mge"]
    gap = t1["spoofing_rate"] - t0["spoofing_rate"]
    mono = t2["spoofing_rate"] >= t0["spoofing_rate"] - 0.05
    ok = loss_ok and gap >= 0.3 and mono and dt < 600
    return report(
        3,
        ok,
        f"L_MGE {t0['l_mge']:.3f} -> {t1['l_mge']:.3f}; spoofing {t0['spoofing_rate']:.3f} / "
        f"{t2['spoofing_rate']:.3f} / {t1['spoofing_rate']:.3f} at omega 0 / 0.2 / 1 (gap {gap:.3f}); {dt:.0f} s",
    )


def criterion_4():
    s, _ = sweep()
    prop = np.abs(np.log(s.gv[1.0] / s.gv_natural))
    mge = np.abs(np.log(s.gv[0.0] / s.gv_natural))
    frac = float(np.mean(prop < mge))
    return report(4, frac >= 0.8, f"GV closer to natural in {frac:.0%} of dims (|log ratio| {np.round(prop, 3)} vs {np.round(mge, 3)})")


# -- 5 ---------------------------------------------------------------------------

def criterion_5():
    t = time.perf_counter()
    stats = duration_comparison(seed=0)
    dt = time.perf_counter() - t
    nat = stats["mse"]["isochrony"]["natural"][1]
    v_mse = stats["mse"]["isochrony"]["generated"][1]
    v_prop = stats["isochrony"]["isochrony"]["generated"][1]
    ok = abs(v_prop - nat) < abs(v_mse - nat) and dt < 300
    return report(5, ok, f"unit-duration variance natural {nat:.1f}, MSE {v_mse:.1f}, adversarial {v_prop:.1f}; {dt:.0f} s")


# -- 6 ---------------------------------------------------------------------------

def criterion_6():
    p, q = gaussian(0, 1, -8, 9, 4096), gaussian(1, 1, -8, 9, 4096)
    kl = divergence_oracle("kl", p, q)
    a, b = gaussian(0, 1, -8, 8, 2048), gaussian(2, 0.5, -8, 8, 2048)
    js_ab, js_ba = divergence_oracle("js", a, b), divergence_oracle("js", b, a)
    rkl_exact = divergence_oracle("rkl", a, b) == divergence_oracle("kl", b, a)
    edges = np.array([-0.5, 0.5, 1.5])
    em = divergence_oracle("em", point_masses([0.0], [1.0], edges), point_masses([1.0], [1.0], edges))
    ok = abs(kl - 0.5) <= 0.02 * 0.5 and abs(js_ab - js_ba) < 1e-12 and js_ab <= np.log(2) and rkl_exact and em == 1.0
    return report(6, ok, f"KL {kl:.5f}, JS {js_ab:.4f}/{js_ba:.4f} (log 2 = {np.log(2):.4f}), RKL swap exact {rkl_exact}, EM {em}")


# -- 7 ---------------------------------------------------------------------------

def criterion_7():
    p, q = default_histograms()
    slack = []
    for seed in range(10):
        est, bound = variational_gap(seed, p, q)
        slack.append(est - bound)
    worst = max(slack)
    return report(7, worst <= 0.05, f"max(-L_D - (2 JS - log 4)) over 10 discriminators = {worst:+.4f} (bound {bound:.4f})")


# -- 8 ---------------------------------------------------------------------------

def criterion_8():
    corpus = gen_corpus(0)
    pairs = corpus.pairs("train")
    cfg = TrainConfig(omega_d=0.0)
    res = train(pairs, cfg)
    G, _ = trainer.init_models(cfg, corpus.input_dim, corpus.output_dim)
    sd = [static_dynamic(y) for _, y in pairs]
    for _ in range(cfg.init_mse_iters):
        for (x, _), Yt in zip(pairs, sd):
            G, _ = trainer.mse_step(G, x, Yt, cfg.eta)
    G = train_mge(G, pairs, SystemCache(estimate_covariance(sd)), cfg, cfg.mge_iters + cfg.joint_iters)
    same_params = all(np.array_equal(a, b) for a, b in zip(res.generator.params(), G.params()))

    with tempfile.TemporaryDirectory() as td:
        root = Path(td)
        save_corpus(corpus, root / "corpus")
        with contextlib.redirect_stdout(io.StringIO()):
            trained = cli_main(["train", "--corpus", str(root / "corpus"), "--omega-d", "1.0", "--seed", "0", "--out", str(root / "run")])
            replay = cli_main(["replay", str(root / "run"), "--out", str(root / "again")])
        identical = (root / "run/history.jsonl").read_bytes() == (root / "again/history.jsonl").read_bytes()
        n_lines = len((root / "run/history.jsonl").read_text().splitlines())
    ok = same_params and trained == 0 and replay == 0 and identical
    return report(8, ok, f"omega 0 == MGE-only bit-for-bit: {same_params}; replayed {n_lines}-line log identical: {identical}")


# -- 9 ---------------------------------------------------------------------------

def criterion_9():
    counts = {"updates": 0, "violations": 0}
    original = trainer.discriminator_step

    def checked(disc, nat, gen, variant, eta):
        disc, l_d = original(disc, nat, gen, variant, eta)
        counts["updates"] += 1
        if any(np.any(np.abs(p) > variant.clip_bound) for p in disc.params()):
            counts["violations"] += 1
        return disc, l_d

    corpus = gen_corpus(0)
    trainer.discriminator_step = checked
    try:
        res = train(corpus.pairs("train"), wgan_config(0))
    finally:
        trainer.discriminator_step = original
    final_max = max(float(np.max(np.abs(p))) for p in res.discriminator.params())
    ok = counts["violations"] == 0 and counts["updates"] > 0
    return report(9, ok, f"{counts['violations']} violations over {counts['updates']} discriminator updates (final max |w| {final_max:.4f})")


# -- 10 --------------------------------------------------------------------------

def criterion_10():
    t = time.perf_counter()
    hist = convergence_run(seed=0)
    dt = time.perf_counter() - t
    r_mge = hist[-1]["l_mge"] / hist[0]["l_mge"]
    r_adv = hist[-1]["l_adv"] / hist[0]["l_adv"]
    ok = len(hist) == 100 and r_mge < 0.5 and r_adv < 0.5
    return report(
        10,
        ok,
        f"L_MGE {hist[0]['l_mge']:.3f} -> {hist[-1]['l_mge']:.3f} ({r_mge:.3f}), "
        f"L_ADV {hist[0]['l_adv']:.3f} -> {hist[-1]['l_adv']:.3f} ({r_adv:.3f}); {dt:.0f} s",
    )


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(check):
    assert check()


if __name__ == "__main__":
    results = [check() for check in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
