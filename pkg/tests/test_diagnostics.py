import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from advspss.data import gen_corpus, read_fseq
from advspss.diagnostics import (
    SpoofingReport,
    corpus_gv,
    discriminator_accuracy,
    export_scatter,
    global_variance,
    sequence_stats,
    spoofing_rate,
)
from advspss.errors import ConfigError, UsageError
from advspss.mlpg import SystemCache
from advspss.net import Layer, Mlp, init_mlp
from advspss.trainer import TrainConfig, generate_all, init_models, train


def constant_disc():
    """1-input discriminator whose score is the input itself."""
    return Mlp((Layer(np.array([[1.0]]), np.array([0.0]), "logit"),))


def test_gv_constant_is_zero():
    np.testing.assert_array_equal(global_variance(np.full((5, 3), 2.5)), 0.0)


def test_gv_population_convention():
    assert global_variance(np.array([[-1.0], [1.0]]))[0] == 1.0


def test_gv_needs_two_frames():
    with pytest.raises(UsageError):
        global_variance(np.zeros((1, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gv_permutation_invariant_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(9, 3))
    gv = global_variance(y)
    np.testing.assert_allclose(global_variance(y[rng.permutation(9)]), gv, rtol=1e-12)
    assert np.all(gv >= 0)


def test_corpus_gv_is_mean_of_profiles(rng):
    seqs = [rng.normal(size=(T, 2)) for T in (4, 9)]
    np.testing.assert_allclose(corpus_gv(seqs), (seqs[0].var(0) + seqs[1].var(0)) / 2)


def test_spoof_hand_count():
    rep = spoofing_rate(constant_disc(), [np.array([[1.0], [2.0], [-1.0], [0.5]])])
    assert rep == SpoofingReport(4, 3)
    assert rep.rate == 0.75


def test_spoof_all_rejected():
    rep = spoofing_rate(constant_disc(), [np.full((6, 1), -1e6)])
    assert rep.rate == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_spoof_rate_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    disc = init_mlp([2, 4, 1], rng, "logit")
    rep = spoofing_rate(disc, [rng.normal(size=(int(rng.integers(1, 10)), 2)) for _ in range(3)])
    assert 0.0 <= rep.rate <= 1.0
    assert rep.rate == rep.spoofed_frames / rep.total_frames


def test_spoof_static_delta_features(rng):
    disc = init_mlp([6, 4, 1], rng, "logit")
    rep = spoofing_rate(disc, [rng.normal(size=(5, 2))], phi="static_delta")
    assert rep.total_frames == 5


def test_stats_hand_values():
    mean, var = sequence_stats([np.full((4, 1), 5.0)])
    assert mean[0] == 5.0 and var[0] == 0.0
    mean, var = sequence_stats([np.array([[0.0]]), np.array([[2.0]])])
    assert mean[0] == 1.0 and var[0] == 1.0


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 3)), elements=st.floats(-1e3, 1e3)))
def test_stats_match_two_pass(frames):
    mean, var = sequence_stats([frames[:1], frames[1:]])
    m = sum(frames) / len(frames)
    v = sum((frames - m) ** 2) / len(frames)
    np.testing.assert_allclose(mean, m, atol=1e-10)
    np.testing.assert_allclose(var, v, atol=1e-10 * max(1.0, float(np.max(v))))


def test_stats_durations_1d():
    mean, var = sequence_stats([np.array([1.0, 3.0])])
    assert mean[0] == 2.0 and var[0] == 1.0


def test_stats_empty():
    with pytest.raises(UsageError):
        sequence_stats([])


def test_scatter_round_trip(tmp_path, rng):
    seqs = [rng.normal(size=(2, 3))]
    path = export_scatter(seqs, (0, 2), tmp_path / "s.fseq")
    back = read_fseq(path)
    assert back.shape == (2, 2)
    np.testing.assert_array_equal(back, seqs[0][:, [0, 2]])


def test_scatter_bad_dims(tmp_path, rng):
    with pytest.raises(ConfigError):
        export_scatter([rng.normal(size=(2, 3))], (0, 3), tmp_path / "s.fseq")
    assert not (tmp_path / "s.fseq").exists()


@pytest.fixture(scope="module")
def mge_run():
    c = gen_corpus(0)
    pairs = c.pairs("train")
    cfg = TrainConfig(joint_iters=0, disc_init_iters=10, ref_iters=0)
    res = train(pairs, cfg)
    systems = SystemCache(res.variance)
    return c, pairs, cfg, res, systems


def test_fresh_discriminator_near_chance(mge_run):
    c, pairs, cfg, res, systems = mge_run
    _, fresh = init_models(cfg, c.input_dim, c.output_dim)
    gen = generate_all(res.generator, pairs, systems)
    acc = discriminator_accuracy(fresh, [y for _, y in pairs], gen)
    assert 0.35 <= acc <= 0.65


def test_initialised_discriminator_beats_chance(mge_run):
    c, pairs, cfg, res, systems = mge_run
    gen = generate_all(res.generator, pairs, systems)
    assert discriminator_accuracy(res.discriminator, [y for _, y in pairs], gen) > 0.7


def test_mge_outputs_over_smoothed(mge_run):
    c, pairs, cfg, res, systems = mge_run
    gen = generate_all(res.generator, c.pairs("eval"), systems)
    nat = [y for _, y in c.pairs("eval")]
    below = corpus_gv(gen) < corpus_gv(nat)
    assert below.mean() >= 0.7
