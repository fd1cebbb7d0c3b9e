"""Noise profiles, corpora, and window-sample stacking."""

from __future__ import annotations

import numpy as np
import pytest

from drmhe.errors import ContractViolation, CorpusError, DimensionError
from drmhe.noise import (
    BIMODAL_MEANS,
    BIMODAL_SIGMAS,
    BIMODAL_WEIGHTS,
    SINE_AMPLITUDE,
    SINE_HALF_WIDTH,
    SINE_RATE,
    NoiseProfile,
    RealizationCorpus,
    build_sample_set,
    generate_corpus,
    load_corpus,
    sample_bimodal,
    sample_profile,
    sample_sine,
    save_corpus,
)
from drmhe.stacking import Window


def test_profile_kind_validation():
    NoiseProfile(kind="sine-uniform")
    NoiseProfile(kind="bimodal-gaussian")
    NoiseProfile(kind="whatever", path="some.csv")  # corpus-backed: any label
    with pytest.raises(ContractViolation):
        NoiseProfile(kind="whatever")
    with pytest.raises(ContractViolation):
        sample_profile(NoiseProfile(kind="x", path="some.csv"), 0.0, np.random.default_rng(0))


def test_sine_draws_stay_in_the_drifting_band():
    rng = np.random.default_rng(0)
    for t in (0.0, 0.37, 1.4, 6.283):
        center = np.sin(SINE_RATE * t) * SINE_AMPLITUDE
        draws = np.array([sample_sine(t, rng) for _ in range(400)])
        assert np.all(draws >= center - SINE_HALF_WIDTH - 1e-12)
        assert np.all(draws <= center + SINE_HALF_WIDTH + 1e-12)
        assert np.abs(draws.mean(axis=0) - center).max() < 0.01


def test_bimodal_moments_match_the_mixture():
    rng = np.random.default_rng(1)
    draws = np.array([sample_bimodal(rng) for _ in range(40000)])
    w0, w1 = BIMODAL_WEIGHTS
    mean = w0 * BIMODAL_MEANS[0] + w1 * BIMODAL_MEANS[1]
    second = w0 * (BIMODAL_SIGMAS**2 + BIMODAL_MEANS[0] ** 2) + w1 * (
        BIMODAL_SIGMAS**2 + BIMODAL_MEANS[1] ** 2
    )
    std = np.sqrt(second - mean**2)
    assert np.allclose(mean, [-0.025, -0.025, 0.0625])
    assert np.abs(draws.mean(axis=0) - mean).max() < 2e-3
    assert np.abs(draws.std(axis=0) / std - 1.0).max() < 0.03


def test_bimodal_draws_form_two_bands():
    """Mode structure of the mixture.

    The disturbance coordinates put the mode centers four sigma apart, so
    their histograms carry two separated peaks with a depleted valley; the
    measurement coordinate (three sigma, 1:3 weights) shows up as a minor
    cluster holding about 28% of the mass below the midpoint.
    """
    rng = np.random.default_rng(2)
    draws = np.array([sample_bimodal(rng) for _ in range(20000)])
    w1 = draws[:, 0]
    counts, edges = np.histogram(w1, bins=np.linspace(-0.15, 0.15, 61))
    mids = 0.5 * (edges[:-1] + edges[1:])
    left = counts[mids < 0.0]
    right = counts[mids >= 0.0]
    assert abs(mids[mids < 0.0][left.argmax()] - (-0.05)) < 0.015
    assert abs(mids[mids >= 0.0][right.argmax()] - 0.05) < 0.015
    # The dip between unequal modes sits near the minor one.
    valley = counts[(mids > 0.0) & (mids < 0.03)].min()
    assert valley < 0.6 * min(left.max(), right.max())

    v = draws[:, 2]
    # Mass below the midpoint between the measurement-noise modes:
    # 0.25 * Phi(1.5) + 0.75 * Phi(-1.5).
    lower = v < 0.025
    assert abs(lower.mean() - 0.2834) < 0.02
    assert -0.06 < v[lower].mean() < -0.03
    assert abs(v[~lower].mean() - 0.10) < 0.01


def test_generate_corpus_shapes_and_grid():
    corpus = generate_corpus(
        NoiseProfile(kind="sine-uniform"), 5, duration=1.0, dt=0.1, seed=0,
        n_train=2, n_test=3,
    )
    assert corpus.draws.shape == (5, 11, 3)
    assert corpus.n == 2 and corpus.p == 1
    assert np.allclose(corpus.times, np.arange(11) * 0.1)
    assert list(corpus.train_ids) == [0, 1]
    assert list(corpus.test_ids) == [2, 3, 4]
    assert corpus.w(0).shape == (11, 2)
    assert corpus.v(0).shape == (11, 1)


def test_generate_corpus_is_reproducible_and_extensible():
    """Same seed, same draws; extra realizations never disturb earlier ones."""
    profile = NoiseProfile(kind="bimodal-gaussian")
    a = generate_corpus(profile, 3, duration=0.5, dt=0.1, seed=9)
    b = generate_corpus(profile, 3, duration=0.5, dt=0.1, seed=9)
    big = generate_corpus(profile, 6, duration=0.5, dt=0.1, seed=9)
    assert np.array_equal(a.draws, b.draws)
    assert np.array_equal(big.draws[:3], a.draws)
    other = generate_corpus(profile, 3, duration=0.5, dt=0.1, seed=10)
    assert not np.array_equal(other.draws, a.draws)


def test_sine_phase_is_shared_across_realizations():
    corpus = generate_corpus(
        NoiseProfile(kind="sine-uniform"), 200, duration=0.5, dt=0.1, seed=3
    )
    for s in (1, 3, 5):
        center = np.sin(SINE_RATE * corpus.times[s]) * SINE_AMPLITUDE
        assert np.abs(corpus.draws[:, s].mean(axis=0) - center).max() < 0.02


def test_generate_corpus_validates_grid():
    profile = NoiseProfile(kind="sine-uniform")
    with pytest.raises(ContractViolation):
        generate_corpus(profile, 2, duration=1.05, dt=0.1, seed=0)
    with pytest.raises(ContractViolation):
        generate_corpus(profile, 2, duration=0.0, dt=0.1, seed=0)
    with pytest.raises(ContractViolation):
        generate_corpus(NoiseProfile(kind="c", path="p.csv"), 2, duration=1.0, dt=0.1, seed=0)


def test_corpus_split_validation():
    draws = np.zeros((4, 3, 3))
    times = np.arange(3) * 0.1
    with pytest.raises(ContractViolation):
        RealizationCorpus(draws=draws, times=times, n=2, p=1, n_train=3, n_test=2)
    with pytest.raises(DimensionError):
        RealizationCorpus(draws=draws, times=times, n=2, p=2, n_train=1, n_test=1)
    with pytest.raises(DimensionError):
        RealizationCorpus(draws=draws, times=np.arange(4), n=2, p=1, n_train=1, n_test=1)


def _small_corpus(n_train=3, n_steps=6, seed=7):
    rng = np.random.default_rng(seed)
    draws = rng.normal(size=(n_train + 1, n_steps + 1, 3))
    return RealizationCorpus(
        draws=draws,
        times=np.arange(n_steps + 1) * 0.1,
        n=2,
        p=1,
        n_train=n_train,
        n_test=1,
    )


def test_build_sample_set_layout():
    corpus = _small_corpus()
    window = Window(n=2, p=1, T_s=3, T_f=1)
    samples = build_sample_set(corpus, window, start_step=1)
    assert samples.v_tilde.shape == (window.p_stacked, 3)
    assert samples.w_tilde.shape == (window.n_stacked, 3)
    assert np.all(samples.v_tilde[:1] == 0.0)
    for k in range(3):
        block = corpus.draws[k, 1 : 1 + window.horizon]
        assert np.array_equal(samples.v_tilde[1:, k], block[:, 2])
        assert np.array_equal(samples.w_tilde[:2, k], [0.0, 0.0])
        assert np.array_equal(samples.w_tilde[2:, k], -block[:, :2].reshape(-1))


def test_build_sample_set_initial_error_policies():
    corpus = _small_corpus()
    window = Window(n=2, p=1, T_s=3, T_f=1)
    mid = build_sample_set(corpus, window, "disturbance-like", start_step=2)
    assert np.array_equal(mid.w_tilde[:2].T, corpus.draws[:3, 1, :2])
    # A window starting at step 0 has no preceding draw; its own first draw
    # stands in.
    head = build_sample_set(corpus, window, "disturbance-like", start_step=0)
    assert np.array_equal(head.w_tilde[:2].T, corpus.draws[:3, 0, :2])
    with pytest.raises(ContractViolation):
        build_sample_set(corpus, window, "gaussian")


def test_build_sample_set_bounds_and_dims():
    corpus = _small_corpus()
    window = Window(n=2, p=1, T_s=3, T_f=1)
    build_sample_set(corpus, window, start_step=2)  # [2, 6] just fits
    with pytest.raises(CorpusError):
        build_sample_set(corpus, window, start_step=3)
    with pytest.raises(CorpusError):
        build_sample_set(corpus, window, start_step=-1)
    with pytest.raises(DimensionError):
        build_sample_set(corpus, Window(n=3, p=1, T_s=2, T_f=1), start_step=0)
    empty = RealizationCorpus(
        draws=corpus.draws, times=corpus.times, n=2, p=1, n_train=0, n_test=2
    )
    with pytest.raises(CorpusError):
        build_sample_set(empty, window, start_step=0)


def test_corpus_csv_round_trip(tmp_path):
    corpus = generate_corpus(
        NoiseProfile(kind="bimodal-gaussian"), 3, duration=0.4, dt=0.1, seed=5,
        n_train=2, n_test=1,
    )
    path = tmp_path / "corpus.csv"
    save_corpus(corpus, path)
    loaded = load_corpus(path, n_train=2, n_test=1)
    assert np.array_equal(loaded.draws, corpus.draws)
    assert np.array_equal(loaded.times, corpus.times)
    assert loaded.n == 2 and loaded.p == 1
    # Saving the loaded corpus reproduces the file byte for byte.
    path2 = tmp_path / "again.csv"
    save_corpus(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_corpus_rejects_malformed_files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return p

    with pytest.raises(CorpusError, match="empty"):
        load_corpus(write("empty.csv", ""))
    with pytest.raises(CorpusError, match="header"):
        load_corpus(write("hdr.csv", "t,real_id,w1,v1\n0,0,1,2\n"))
    with pytest.raises(CorpusError, match="malformed"):
        load_corpus(write("cols.csv", "real_id,t,w1,w3,v1\n0,0,1,2,3\n"))
    with pytest.raises(CorpusError, match="no data"):
        load_corpus(write("nodata.csv", "real_id,t,w1,v1\n"))
    with pytest.raises(CorpusError, match="fields"):
        load_corpus(write("ragged.csv", "real_id,t,w1,v1\n0,0.0,1.0\n"))
    with pytest.raises(CorpusError, match="differing lengths"):
        load_corpus(
            write(
                "lens.csv",
                "real_id,t,w1,v1\n0,0.0,1,1\n0,0.1,1,1\n1,0.0,1,1\n",
            )
        )
    with pytest.raises(CorpusError, match="not uniform"):
        load_corpus(
            write(
                "grid.csv",
                "real_id,t,w1,v1\n0,0.0,1,1\n0,0.1,1,1\n0,0.35,1,1\n",
            )
        )
