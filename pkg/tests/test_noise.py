import numpy as np
import pytest

from wavefilter.noise import (
    JumpSpec,
    NoiseError,
    NoiseSpec,
    RngStreams,
    WienerSpec,
    sample_jump_block,
    sample_jump_increment,
    sample_levy_block,
    sample_levy_increment,
    sample_wiener_block,
    sample_wiener_increment,
)


def test_wiener_zero_eigenvalues():
    spec = WienerSpec.zero(4)
    rng = np.random.default_rng(0)
    inc = sample_wiener_increment(spec, 0.1, rng)
    assert np.all(inc == 0)


def test_wiener_variance_mc():
    lam, dt, n = 0.4, 0.01, 100_000
    spec = WienerSpec(np.array([lam]))
    rng = np.random.default_rng(7)
    draws = sample_wiener_block(spec, dt, rng, n)[:, 0]
    var = np.mean(np.abs(draws) ** 2)
    assert abs(var - lam * dt) <= 0.05 * lam * dt
    # real and imaginary parts split the variance evenly
    assert abs(np.var(draws.real) - lam * dt / 2) <= 0.05 * lam * dt / 2


def test_wiener_cross_covariance_mc():
    spec = WienerSpec(np.array([0.5, 1.5]))
    rng = np.random.default_rng(11)
    n = 100_000
    draws = sample_wiener_block(spec, 0.02, rng, n)
    cross = np.mean(draws[:, 0] * np.conj(draws[:, 1]))
    se = np.sqrt(0.5 * 0.02 * 1.5 * 0.02 / n)
    assert abs(cross) <= 3 * se


def test_jump_zero_rate():
    spec = JumpSpec(rates=np.zeros(3), amplitudes=np.ones(3))
    rng = np.random.default_rng(0)
    assert np.all(sample_jump_increment(spec, 0.5, rng) == 0)


def test_jump_mean_and_variance_mc():
    mu, a, dt, n = 2.0, 0.7, 0.05, 100_000
    spec = JumpSpec(rates=np.array([mu]), amplitudes=np.array([a]))
    rng = np.random.default_rng(13)
    draws = sample_jump_block(spec, dt, rng, n)[:, 0]
    target_var = mu * a**2 * dt  # matches Lambda_ii dt
    se = np.sqrt(target_var / n)
    assert abs(np.mean(draws)) <= 3 * se
    assert abs(np.var(draws) - target_var) <= 0.05 * target_var
    assert spec.lambda_matrix[0, 0] == pytest.approx(mu * a**2)


def test_jump_compensation_martingale():
    # running sum over [0, 1] has mean 0 within 3 standard errors
    mu, a, dt = 3.0, 0.5, 0.01
    spec = JumpSpec(rates=np.array([mu]), amplitudes=np.array([a]))
    rng = np.random.default_rng(17)
    n_paths, n_steps = 4000, 100
    total = np.zeros(n_paths)
    for k in range(n_steps):
        total += sample_jump_block(spec, dt, rng, n_paths)[:, 0]
    se = np.sqrt(mu * a**2 * 1.0 / n_paths)
    assert abs(np.mean(total)) <= 3 * se


def test_levy_zero_specs():
    spec = NoiseSpec.zero(2)
    rng = np.random.default_rng(0)
    inc = sample_levy_increment(spec.wiener, spec.jump, 0.1, rng)
    assert np.all(inc.total == 0)


def test_levy_jump_only_matches_jump_sampler():
    jump = JumpSpec(rates=np.array([1.5]), amplitudes=np.array([0.3]))
    wiener = WienerSpec.zero(1)
    r1 = np.random.default_rng(23)
    r2 = np.random.default_rng(23)
    a = sample_levy_block(wiener, jump, 0.1, r1, 1000)
    # wiener part consumes normals first; replicating that stream order
    _ = sample_wiener_block(wiener, 0.1, r2, 1000)
    b = sample_jump_block(jump, 0.1, r2, 1000)
    assert np.allclose(a.dJ.real, b)
    assert np.all(a.dW == 0)


def test_levy_combined_variance_mc():
    lam, mu, a, dt, n = 0.3, 2.0, 0.4, 0.02, 100_000
    wiener = WienerSpec(np.array([lam]))
    jump = JumpSpec(rates=np.array([mu]), amplitudes=np.array([a]))
    rng = np.random.default_rng(31)
    inc = sample_levy_block(wiener, jump, dt, rng, n)
    var = np.var(inc.total[:, 0].real) + np.var(inc.total[:, 0].imag)
    target = lam * dt + mu * a**2 * dt
    assert abs(var - target) <= 0.05 * target


def test_variance_linear_in_dt():
    lam = 0.8
    spec = WienerSpec(np.array([lam]))
    n = 200_000
    v = []
    for i, dt in enumerate((0.01, 0.02)):
        rng = np.random.default_rng(41 + i)
        draws = sample_wiener_block(spec, dt, rng, n)[:, 0]
        v.append(np.mean(np.abs(draws) ** 2))
    assert abs(v[1] / v[0] - 2.0) <= 0.2


def test_stream_reproducibility_bit_for_bit():
    streams = RngStreams(99)
    spec = WienerSpec(np.array([1.0, 2.0]))
    a = sample_wiener_block(spec, 0.1, streams.generator("signal", 5), 3)
    b = sample_wiener_block(spec, 0.1, streams.generator("signal", 5), 3)
    assert np.array_equal(a, b)
    c = sample_wiener_block(spec, 0.1, streams.generator("signal", 6), 3)
    assert not np.array_equal(a, c)
    d = sample_wiener_block(spec, 0.1, streams.generator("obs", 5), 3)
    assert not np.array_equal(a, d)


def test_single_increment_matches_block_row():
    streams = RngStreams(7)
    spec = WienerSpec(np.array([0.5, 0.25]))
    single = sample_wiener_increment(spec, 0.2, streams.generator("signal", 0))
    block = sample_wiener_block(spec, 0.2, streams.generator("signal", 0), 1)
    assert np.array_equal(single, block[0])


def test_signal_obs_streams_uncorrelated():
    streams = RngStreams(3)
    spec = WienerSpec(np.array([1.0]))
    n = 50_000
    a = sample_wiener_block(spec, 0.1, streams.generator("signal", 0), n)[:, 0].real
    b = sample_wiener_block(spec, 0.1, streams.generator("obs", 0), n)[:, 0].real
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) <= 3 / np.sqrt(n)


def test_reject_bad_dt():
    spec = WienerSpec(np.array([1.0]))
    rng = np.random.default_rng(0)
    with pytest.raises(NoiseError):
        sample_wiener_increment(spec, 0.0, rng)
    with pytest.raises(NoiseError):
        sample_jump_increment(JumpSpec.zero(1), -0.1, rng)


def test_spec_validation():
    with pytest.raises(NoiseError):
        WienerSpec(np.array([-1.0]))
    with pytest.raises(NoiseError):
        JumpSpec(rates=np.array([-1.0]), amplitudes=np.array([1.0]))
    with pytest.raises(NoiseError):
        NoiseSpec(wiener=WienerSpec.zero(2), jump=JumpSpec.zero(3))


def test_custom_amplitude_law():
    # exponential amplitudes with mean a: variance rate mu * E[a^2] = 2 mu a^2
    mu, a = 4.0, 0.5
    spec = JumpSpec(
        rates=np.array([mu]),
        amplitudes=np.array([a]),
        amplitude_sampler=lambda rng, i, n: rng.exponential(a, size=n),
        amplitude_second_moment=np.array([2 * a**2]),
    )
    rng = np.random.default_rng(53)
    draws = sample_jump_block(spec, 0.05, rng, 60_000)[:, 0]
    target = mu * 2 * a**2 * 0.05
    assert abs(np.var(draws) - target) <= 0.08 * target
    assert spec.lambda_matrix[0, 0] == pytest.approx(2 * mu * a**2)
