import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import toeplitz

from vibesep.evaluation import spectral_flatness
from vibesep.simulate import compose, gen_transfer_function
from vibesep.wbd import (
    AutocorrSequence,
    DeconvFilter,
    apply_deconv,
    estimate_autocorr,
    whitening_filter,
    whitening_matrix,
)

N = 24000


def random_autocorr(rng, n):
    """Autocorrelation of a random short MA process, so R is well conditioned."""
    taps = rng.standard_normal(rng.integers(2, 6))
    full = np.correlate(taps, taps, mode="full")[len(taps) - 1 :]
    r = np.zeros(n)
    r[: min(n, len(full))] = full[:n]
    r[0] += 0.5  # white floor
    return AutocorrSequence(r, n)


def dense_oracle(r):
    """Centre column of sigma * R^(-1/2) via numpy's eigensolver."""
    R = toeplitz(r)
    lam, U = np.linalg.eigh(R)
    G = np.sqrt(r[0]) * U @ np.diag(lam**-0.5) @ U.T
    return G[:, (len(r) - 1) // 2]


# ---------------------------------------------------------------- autocorrelation


def test_autocorr_white_noise_bounds():
    x = np.random.default_rng(0).standard_normal(N)
    ac = estimate_autocorr(x, 11)
    assert 0.95 <= ac.sigma2 <= 1.05
    assert np.all(np.abs(ac.r[1:]) <= 4 / np.sqrt(N))


def test_autocorr_constant_is_zero():
    ac = estimate_autocorr(np.full(500, 3.7), 11)
    assert not np.any(ac.r)


def test_autocorr_matches_direct_sum():
    x = np.random.default_rng(1).standard_normal(300)
    ac = estimate_autocorr(x, 7)
    xc = x - x.mean()
    ref = np.array([np.dot(xc[t:], xc[: len(xc) - t]) for t in range(7)]) / len(x)
    np.testing.assert_allclose(ac.r, ref, rtol=1e-12, atol=1e-14)


def test_autocorr_of_filtered_noise():
    tf = gen_transfer_function(5, 101, 24000.0, 3)
    w = 2.0 * np.random.default_rng(2).standard_normal(N)
    x = np.convolve(w, tf.coeffs, mode="same")
    ac = estimate_autocorr(x, 21)
    h = tf.coeffs
    phi = np.array([np.dot(h[t:], h[: len(h) - t]) for t in range(21)])
    # standard error of the 1/N estimate is about sigma^2 * sqrt(sum phi^2 / N)
    se = 4.0 * np.sqrt(2 * np.sum(phi**2) / N)
    assert np.all(np.abs(ac.r - 4.0 * phi) <= 5 * se)


def test_autocorr_requires_enough_samples():
    with pytest.raises(ValueError, match="at least"):
        estimate_autocorr(np.ones(109), 11)


def test_autocorr_requires_odd_length():
    with pytest.raises(ValueError):
        estimate_autocorr(np.ones(1000), 10)


@given(st.integers(0, 2**31), st.sampled_from([3, 11, 31]))
@settings(max_examples=30, deadline=None)
def test_autocorr_bounded_by_zero_lag(seed, n):
    x = np.random.default_rng(seed).standard_normal(20 * n) ** 3
    ac = estimate_autocorr(x, n)
    assert ac.is_valid()
    assert np.linalg.eigvalsh(ac.toeplitz()).min() >= -1e-10 * ac.sigma2


# ---------------------------------------------------------------- filter


def test_filter_of_white_autocorr_is_identity():
    r = np.zeros(11)
    r[0] = 2.5
    g = whitening_filter(AutocorrSequence(r, 11)).g
    expected = np.zeros(11)
    expected[5] = 1.0
    np.testing.assert_allclose(g, expected, atol=1e-14)


def test_filter_three_tap_oracle():
    r = np.array([1.0, 0.5, 0.0])
    g = whitening_filter(AutocorrSequence(r, 3)).g
    np.testing.assert_allclose(g, dense_oracle(r), rtol=0, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_filter_eleven_tap_oracle(seed):
    ac = random_autocorr(np.random.default_rng(seed), 11)
    np.testing.assert_allclose(whitening_filter(ac).g, dense_oracle(ac.r), rtol=0, atol=1e-10)


@given(st.integers(0, 2**31), st.sampled_from([3, 11, 51]))
@settings(max_examples=30, deadline=None)
def test_filter_symmetric_and_zero_phase(seed, n):
    ac = random_autocorr(np.random.default_rng(seed), n)
    f = whitening_filter(ac)
    assert f.center == (n - 1) // 2
    np.testing.assert_allclose(f.g, f.g[::-1], rtol=0, atol=1e-9 * np.abs(f.g).max())
    buf = np.zeros(256)
    buf[: f.center + 1] = f.g[f.center :]
    if f.center:
        buf[-f.center :] = f.g[: f.center]
    spec = np.fft.rfft(buf)
    assert np.all(np.abs(spec.imag) <= 1e-9 * np.abs(spec).max())


@pytest.mark.parametrize("n", [11, 51, 251])
def test_whitening_identity(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        ac = random_autocorr(rng, n)
        G = whitening_matrix(ac)
        R = ac.toeplitz()
        target = ac.sigma2 * np.eye(n)
        assert np.linalg.norm(G @ R @ G.T - target) / np.linalg.norm(target) <= 1e-8


def test_filter_rejects_zero_autocorr():
    with pytest.raises(ValueError):
        whitening_filter(AutocorrSequence(np.zeros(5), 5))


def test_flooring_bounds_gain():
    # nearly singular R: a pure tone autocorrelation
    r = np.cos(0.3 * np.arange(21))
    G = whitening_matrix(AutocorrSequence(r, 21), reg_eps=1e-6)
    assert np.all(np.isfinite(G))
    assert np.abs(G).max() <= 1e3 * 2


# ---------------------------------------------------------------- apply


def test_apply_identity():
    x = np.random.default_rng(0).standard_normal(100)
    np.testing.assert_array_equal(apply_deconv(x, DeconvFilter.identity(1)), x)
    np.testing.assert_array_equal(apply_deconv(x, DeconvFilter.identity(7))[3:-3], x[3:-3])


def test_apply_alignment_convention():
    g = np.array([0.2, 0.5, 1.0, 0.5, 0.2])
    x = np.random.default_rng(1).standard_normal(40)
    out = apply_deconv(x, DeconvFilter(g))
    c = 2
    for t in range(c, 40 - c):
        ref = sum(g[k] * x[t + c - k] for k in range(5))
        assert out[t] == pytest.approx(ref, abs=1e-12)


@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_apply_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    f = DeconvFilter(rng.standard_normal(9))
    x, z = rng.standard_normal((2, 200))
    np.testing.assert_allclose(
        apply_deconv(a * x + b * z, f), a * apply_deconv(x, f) + b * apply_deconv(z, f), atol=1e-11
    )


def test_apply_rejects_short_signal():
    with pytest.raises(ValueError):
        apply_deconv(np.ones(4), DeconvFilter.identity(5))


@pytest.mark.parametrize("seed", range(3))
def test_deconvolution_whitens_and_preserves_energy(seed):
    tf = gen_transfer_function(5, 251, 24000.0, seed)
    w = np.random.default_rng(100 + seed).standard_normal(N)
    x = compose(np.zeros(N), np.zeros(N), w, tf).s[125:-125]
    f = whitening_filter(estimate_autocorr(x, 251))
    y = apply_deconv(x, f)[f.center : -f.center]
    r = estimate_autocorr(y, 11).r
    assert np.all(np.abs(r[1:] / r[0]) <= 5 * 4 / np.sqrt(len(y)))
    assert 0.5 <= y.var() / x.var() <= 2.0
    assert spectral_flatness(x) <= 0.4
    assert spectral_flatness(y) >= 0.7


# ---------------------------------------------------------------- serialisation


def test_filter_json_and_csv_round_trip(tmp_path):
    f = DeconvFilter(np.random.default_rng(3).standard_normal(9))
    f.to_json(tmp_path / "g.json")
    f.to_csv(tmp_path / "g.csv")
    assert np.array_equal(DeconvFilter.from_json(tmp_path / "g.json").g, f.g)
    assert np.array_equal(DeconvFilter.from_csv(tmp_path / "g.csv").g, f.g)


def test_filter_requires_odd_length():
    with pytest.raises(ValueError):
        DeconvFilter(np.ones(4))
