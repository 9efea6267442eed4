import numpy as np
import pytest

from conftest import nls_spec, random_state
from wavefilter.integrator import (
    ADDITIVE,
    IntegrationError,
    PathConfig,
    SignalModel,
    Trajectory,
    guard_norm,
    simulate_path,
    step_block,
    step_mild,
)
from wavefilter.noise import NoiseIncrement, NoiseSpec, RngStreams, WienerSpec, sample_wiener_block
from wavefilter.spectral import (
    FieldState,
    apply_free_propagator,
    build_basis,
    nonlinearity_flat,
    to_spectral,
)


def make_model(spec, coupling="multiplicative"):
    basis = build_basis(spec)
    return SignalModel(spec=spec, basis=basis, coupling=coupling)


def zero_increment(dim, dt):
    z = np.zeros(dim, dtype=complex)
    return NoiseIncrement(dW=z, dJ=z.copy(), dt=dt)


def test_step_reduces_to_free_propagation(rng):
    spec = nls_spec(modes=4, linear=True)
    model = make_model(spec)
    state = random_state(rng, model.basis, spec)
    dt = 0.05
    out = step_mild(state, dt, zero_increment(model.noise_dim, dt), model)
    expected = apply_free_propagator(state, model.basis, spec, dt)
    assert np.allclose(out.flat(), expected.flat(), atol=1e-14)
    assert out.time == pytest.approx(dt)


def test_step_dt_mismatch_rejected(rng):
    spec = nls_spec(linear=True)
    model = make_model(spec)
    state = random_state(rng, model.basis, spec)
    with pytest.raises(ValueError):
        step_mild(state, 0.1, zero_increment(model.noise_dim, 0.2), model)


def test_step_small_dt_consistency(rng):
    # (phi_1 - phi_0)/dt -> -iA phi + J(phi) as dt -> 0
    spec = nls_spec(modes=4)
    model = make_model(spec)
    state = random_state(rng, model.basis, spec, scale=0.5)
    flat = state.flat()
    dt = 1e-7
    out = step_mild(state, dt, zero_increment(model.noise_dim, dt), model)
    fd = (out.flat() - flat) / dt
    rhs = -1j * model.basis.eigA * flat + nonlinearity_flat(flat, model.basis, spec)
    assert np.max(np.abs(fd - rhs)) <= 1e-5 * max(1.0, np.max(np.abs(rhs)))


def test_step_gbm_one_step_mean():
    # scalar surrogate: A = 0 (k = 0 mode only), J = 0, multiplicative noise.
    # One step gives phi_1 = phi_0 (1 + dW_grid), so E[phi_1] = phi_0.
    spec = nls_spec(modes=2, linear=True)
    model = make_model(spec)
    lam, dt, n = 0.5, 0.05, 200_000
    wiener = WienerSpec(np.array([lam, 0.0]))
    phi0 = 1.3 + 0.4j
    states = np.zeros((n, 2), dtype=complex)
    states[:, 0] = phi0
    rng = np.random.default_rng(61)
    dw = sample_wiener_block(wiener, dt, rng, n)
    inc = NoiseIncrement(dW=dw, dJ=np.zeros_like(dw), dt=dt)
    out = step_block(states, dt, inc, model)
    # effective per-coefficient variance carries the 1/n_grid factor of the
    # grid product, lam_eff = lam / 2 here
    se = np.sqrt(lam / 2 * dt / n) * abs(phi0)
    assert abs(np.mean(out[:, 0]) - phi0) <= 3 * se
    assert np.max(np.abs(out[:, 1])) <= 1e-12


def test_simulate_path_zero_noise_linear_norm_constant(rng):
    spec = nls_spec(modes=4, linear=True)
    model = make_model(spec)
    x0 = random_state(rng, model.basis, spec)
    config = PathConfig(dt=0.01, t_end=0.5, guard_lambda=1e6, guard_order=2, seed=5)
    traj = simulate_path(x0, config, NoiseSpec.zero(model.noise_dim), model)
    norms = [np.linalg.norm(s.flat()) for s in traj.states]
    assert np.allclose(norms, norms[0], rtol=1e-12)
    assert traj.stopped_at is None
    assert len(traj.states) == config.n_steps + 1


def test_simulate_path_guard_trips_immediately(rng):
    spec = nls_spec(modes=4, linear=True)
    model = make_model(spec)
    x0 = random_state(rng, model.basis, spec, scale=2.0)
    lam_guard = 0.5 * guard_norm(x0, model.basis, 1)
    config = PathConfig(dt=0.01, t_end=0.5, guard_lambda=lam_guard, guard_order=1, seed=5)
    traj = simulate_path(x0, config, NoiseSpec.zero(model.noise_dim), model)
    assert traj.stopped_at == pytest.approx(config.dt)
    assert len(traj.states) == 2
    assert guard_norm(traj.states[-1], model.basis, 1) > lam_guard


def test_simulate_path_reproducible_prefix():
    # adaptedness surrogate: a shorter run is a prefix of a longer run
    spec = nls_spec(modes=4, linear=True)
    model = make_model(spec)
    x0 = FieldState(primary=np.array([1.0, 0.2j, 0.1, 0.0], dtype=complex))
    noise = NoiseSpec.wiener_only(np.full(model.noise_dim, 0.2))
    long = simulate_path(x0, PathConfig(dt=0.01, t_end=0.5, seed=9), noise, model)
    short = simulate_path(x0, PathConfig(dt=0.01, t_end=0.3, seed=9), noise, model)
    n = len(short.states)
    assert np.array_equal(short.flat_array(), long.flat_array()[:n])


def test_focusing_stops_defocusing_completes():
    # with the focusing sign the L2 norm grows monotonically under the power
    # nonlinearity, so a guard above ||x0|| trips; the defocusing run survives
    base = dict(modes=4)
    x0 = FieldState(primary=np.array([2.0, 0.5, 0.0, 0.5], dtype=complex))
    noise_dim = 4
    config = PathConfig(dt=0.005, t_end=2.0, guard_lambda=8.0, guard_order=1, seed=3)
    focusing = make_model(nls_spec(sign=1, **base))
    defocusing = make_model(nls_spec(sign=-1, **base))
    traj_f = simulate_path(x0, config, NoiseSpec.zero(noise_dim), focusing)
    traj_d = simulate_path(x0, config, NoiseSpec.zero(noise_dim), defocusing)
    assert traj_f.stopped_at is not None
    assert traj_d.stopped_at is None


def test_additive_coupling_linear_gaussian():
    # additive mode: state noise enters as B dM independent of the state
    spec = nls_spec(modes=2, linear=True)
    model = make_model(spec, coupling=ADDITIVE)
    assert model.noise_dim == 2
    dt, lam, n = 0.1, 0.8, 100_000
    wiener = WienerSpec(np.array([lam, 0.0]))
    states = np.zeros((n, 2), dtype=complex)
    rng = np.random.default_rng(71)
    dw = sample_wiener_block(wiener, dt, rng, n)
    out = step_block(states, dt, NoiseIncrement(dW=dw, dJ=np.zeros_like(dw), dt=dt), model)
    var = np.mean(np.abs(out[:, 0]) ** 2)
    assert abs(var - lam * dt) <= 0.05 * lam * dt


def test_b_scale_additive():
    spec = nls_spec(modes=2, linear=True)
    basis = build_basis(spec)
    model = SignalModel(spec=spec, basis=basis, coupling=ADDITIVE, b_scale=np.array([2.0, 0.0]))
    dt = 0.1
    inc = NoiseIncrement(dW=np.array([1.0 + 0j, 1.0 + 0j]), dJ=np.zeros(2, dtype=complex), dt=dt)
    out = step_block(np.zeros((1, 2), dtype=complex), dt, inc, model)[0]
    # phase rotation of mode 0 is identity (eigA = 0); mode 1 was zeroed by B
    assert out[0] == pytest.approx(2.0 + 0j)
    assert abs(out[1]) == 0.0


def test_nonfinite_step_raises():
    spec = nls_spec(modes=2, linear=True)
    model = make_model(spec)
    state = FieldState(primary=np.array([np.inf, 0.0], dtype=complex))
    with pytest.raises(IntegrationError):
        step_mild(state, 0.1, zero_increment(model.noise_dim, 0.1), model)


def test_moment_bound_shape_mc():
    # E[sup_{t<=T} ||phi||^2] finite with at-most-exponential growth in T on
    # the linear multiplicative model
    spec = nls_spec(modes=2, linear=True)
    model = make_model(spec)
    lam = 0.6
    wiener = WienerSpec(np.array([lam, lam]))
    dt, n_paths = 0.01, 2000
    streams = RngStreams(17)
    states = np.ones((n_paths, 2), dtype=complex)
    running_sup = np.sum(np.abs(states) ** 2, axis=1)
    sup_at = {}
    for n in range(100):
        rng = streams.generator("mc", n)
        dw = sample_wiener_block(wiener, dt, rng, n_paths)
        states = step_block(states, dt, NoiseIncrement(dW=dw, dJ=np.zeros_like(dw), dt=dt), model)
        running_sup = np.maximum(running_sup, np.sum(np.abs(states) ** 2, axis=1))
        t = (n + 1) * dt
        if np.isclose(t, 0.5) or np.isclose(t, 1.0):
            sup_at[round(t, 3)] = np.mean(running_sup)
    m_half, m_one = sup_at[0.5], sup_at[1.0]
    assert np.isfinite(m_half) and np.isfinite(m_one)
    c_fit = np.log(m_one / m_half) / 0.5
    assert 0 <= c_fit <= 4 * lam


def test_path_config_validation():
    with pytest.raises(ValueError):
        PathConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        PathConfig(dt=0.5, t_end=0.1)
    with pytest.raises(ValueError):
        PathConfig(dt=0.1, t_end=1.0, guard_lambda=-1.0)
