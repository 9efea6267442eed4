"""Particle realization of the measure-valued filtering recursions.

A weighted cloud of signal realizations carries both conditional measures at
once: the raw log-weights accumulate the Bayes exponent (unnormalized /
Zakai picture) and normalization recovers the probability-measure picture
(FKK), the two being related by the total-mass factor that normalization
reports.  Propagation uses the signal dynamics as proposal (bootstrap), so a
weight update is exactly the multiplicative likelihood functional.

Particles that trip the blow-up guard (or go non-finite) are frozen: their
state stops evolving and their weight drops to -inf, so the next systematic
resample replaces them.

Storage is a stacked (n_particles, state_dim) complex array; ``particles``
exposes the FieldState view expected by state functionals.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .integrator import SignalModel, step_block
from .noise import NoiseSpec, RngStreams, sample_levy_block
from .observation import (
    ITO,
    ObservationOperator,
    ObservationRecord,
    log_increment_ito_block,
    log_increment_wn_block,
)
from .spectral import FieldState, realify_block, state_from_flat


class ParticleError(RuntimeError):
    pass


@dataclass
class ParticleCloud:
    states: np.ndarray  # (n, D) complex
    log_weights: np.ndarray  # (n,)
    frozen: np.ndarray  # (n,) bool
    step: int = 0
    time: float = 0.0

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.frozen = np.asarray(self.frozen, dtype=bool)
        if not (self.states.shape[0] == self.log_weights.shape[0] == self.frozen.shape[0]):
            raise ParticleError("particle count mismatch between states/weights/frozen")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def particles(self) -> list:
        return [FieldState(primary=row.copy(), time=self.time) for row in self.states]

    def field_states(self, model: SignalModel) -> list:
        return [
            state_from_flat(row, model.basis, model.spec, time=self.time)
            for row in self.states
        ]

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights
        mx = np.max(lw)
        if not np.isfinite(mx):
            raise ParticleError("all particles frozen; the cloud carries no mass")
        w = np.exp(lw - mx)
        return w / np.sum(w)

    @property
    def ess(self) -> float:
        w = self.normalized_weights()
        return float(1.0 / np.sum(w**2))

    @classmethod
    def from_prior(
        cls,
        n: int,
        mean_real: np.ndarray,
        cov_diag: np.ndarray,
        model: SignalModel,
        rng: np.random.Generator,
    ) -> "ParticleCloud":
        """Draw n particles from a Gaussian prior over real coordinates."""
        from .spectral import unrealify_block

        mean_real = np.asarray(mean_real, dtype=float)
        cov_diag = np.broadcast_to(np.asarray(cov_diag, dtype=float), mean_real.shape)
        draws = mean_real + np.sqrt(cov_diag) * rng.standard_normal((n, mean_real.shape[0]))
        states = unrealify_block(draws, model.basis, model.spec)
        return cls(
            states=states,
            log_weights=np.full(n, -np.log(n)),
            frozen=np.zeros(n, dtype=bool),
        )


def _guard_norms_block(states: np.ndarray, model: SignalModel, guard_order: int) -> np.ndarray:
    """sup_{0<=j<N_g} ||A^j phi|| per row, vectorized."""
    basis = model.basis
    m = basis.n_modes
    mags = np.abs(states) ** 2
    if model.spec.second_order:
        mags = mags[:, :m] + mags[:, m:]
    best = np.zeros(mags.shape[0])
    for j in range(guard_order):
        norms = np.sqrt(mags @ (basis.eigA ** (2 * j)))
        best = np.maximum(best, norms)
    return best


def pf_propagate(
    cloud: ParticleCloud,
    dt: float,
    model: SignalModel,
    noise: NoiseSpec,
    streams: RngStreams,
    family: str = "pf",
    guard_lambda: float | None = None,
    guard_order: int = 1,
) -> ParticleCloud:
    """Advance every particle one mild step with independent increments.

    Step k of the cloud draws a (n, dim) block from stream (family, k); row i
    is particle i's increment, so a one-particle cloud reproduces a
    simulate_path step drawn from the same stream.  Weights are untouched;
    guard-tripping or non-finite particles are frozen at their last state
    with weight -inf.
    """
    rng = streams.generator(family, cloud.step)
    inc = sample_levy_block(noise.wiener, noise.jump, dt, rng, cloud.n)
    new_states = step_block(cloud.states, dt, inc, model)
    finite = np.all(np.isfinite(new_states.view(float)), axis=1)
    tripped = np.zeros(cloud.n, dtype=bool)
    if guard_lambda is not None:
        with np.errstate(invalid="ignore"):
            norms = _guard_norms_block(np.where(finite[:, None], new_states, 0.0), model, guard_order)
        tripped = norms > guard_lambda
    newly_frozen = (~finite) | tripped
    frozen = cloud.frozen | newly_frozen
    keep_old = (cloud.frozen | newly_frozen)[:, None]
    states = np.where(keep_old, cloud.states, new_states)
    log_weights = np.where(frozen, -np.inf, cloud.log_weights)
    return ParticleCloud(
        states=states,
        log_weights=log_weights,
        frozen=frozen,
        step=cloud.step + 1,
        time=cloud.time + dt,
    )


def _update(cloud: ParticleCloud, increments: np.ndarray) -> ParticleCloud:
    lw = cloud.log_weights.copy()
    active = ~cloud.frozen
    lw[active] = lw[active] + increments[active]
    return replace(cloud, log_weights=lw)


def pf_update_ito(
    cloud: ParticleCloud, dY: np.ndarray, dt: float, op: ObservationOperator
) -> ParticleCloud:
    """Multiplicative reweighting by the Ito Bayes factor (Zakai update)."""
    h = op.evaluate_block(cloud.states)
    return _update(cloud, log_increment_ito_block(h, dY, dt, op))


def pf_update_whitenoise(
    cloud: ParticleCloud, y_sample: np.ndarray, dt: float, op: ObservationOperator
) -> ParticleCloud:
    """Reweighting by the white-noise likelihood exponent."""
    h = op.evaluate_block(cloud.states)
    return _update(cloud, log_increment_wn_block(h, y_sample, dt, op))


def pf_normalize(cloud: ParticleCloud) -> tuple:
    """Normalize weights via log-sum-exp.

    Returns ``(cloud, log_evidence)`` with ``log_evidence = log(mean weight)``,
    the log total mass of the unnormalized measure carried since the last
    normalization (the cloud realizes the measure as an equally-seeded mixture,
    so total mass is the mean, not the sum, of the particle weights).
    """
    lw = cloud.log_weights
    mx = np.max(lw)
    if not np.isfinite(mx):
        raise ParticleError("all particles frozen; cannot normalize")
    lse = mx + np.log(np.sum(np.exp(lw - mx)))
    log_evidence = lse - np.log(cloud.n)
    return replace(cloud, log_weights=lw - lse), float(log_evidence)


def pf_resample(
    cloud: ParticleCloud, ess_threshold: float, rng: np.random.Generator
) -> ParticleCloud:
    """Systematic resampling when ESS drops below threshold * n.

    Deterministic given the stream: one uniform offset places the n ordered
    points (u + i)/n on the cumulative weights.  Weights reset to uniform and
    frozen particles (weight zero) are replaced by live copies.
    """
    n = cloud.n
    if cloud.ess >= ess_threshold * n:
        return cloud
    w = cloud.normalized_weights()
    positions = (rng.uniform() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(w), positions)
    idx = np.clip(idx, 0, n - 1)
    return ParticleCloud(
        states=cloud.states[idx].copy(),
        log_weights=np.full(n, -np.log(n)),
        frozen=cloud.frozen[idx].copy(),
        step=cloud.step,
        time=cloud.time,
    )


def pf_moment(cloud: ParticleCloud, f, model: SignalModel | None = None) -> float:
    """Posterior moment sum_i w_i f(x_i) under the normalized weights.

    Pass the model for second-order states so f receives the (psi, v) pair.
    """
    w = cloud.normalized_weights()
    states = cloud.particles if model is None else cloud.field_states(model)
    values = np.array([f(state) for state in states])
    return float(np.sum(w * values))


def cloud_mean_real(cloud: ParticleCloud, model: SignalModel) -> np.ndarray:
    """Weighted posterior mean in real-ified coordinates."""
    w = cloud.normalized_weights()
    reals = realify_block(cloud.states, model.basis, model.spec)
    return w @ reals


def cloud_cov_trace_real(cloud: ParticleCloud, model: SignalModel) -> float:
    """Trace of the weighted posterior covariance in real coordinates."""
    w = cloud.normalized_weights()
    reals = realify_block(cloud.states, model.basis, model.spec)
    mean = w @ reals
    centered = reals - mean
    return float(np.sum(w @ (centered**2)))


def innovation_path(
    record: ObservationRecord, hhat_path: np.ndarray, op: ObservationOperator
) -> np.ndarray:
    """Innovation increments d(nu) = dY - E[h(X)|F^Y] dt.

    ``hhat_path[n]`` is the filter's h-moment at the start of interval n.
    White-noise records are bridged through Y dt = dY.
    """
    hhat = np.atleast_2d(np.asarray(hhat_path, dtype=float))
    dY = record.as_ito_increments()
    if hhat.shape[0] != dY.shape[0]:
        raise ParticleError(
            f"moment history length {hhat.shape[0]} != record length {dY.shape[0]}"
        )
    return dY - hhat * record.dt


@dataclass
class MomentFunctional:
    """A scalar moment evaluated on truth states and on filter summaries."""

    of_state: object  # FieldState -> float
    of_estimate: object  # posterior mean vector (real coords) -> float

    @classmethod
    def coordinate(cls, index: int, model: SignalModel) -> "MomentFunctional":
        from .spectral import realify_state

        return cls(
            of_state=lambda s: float(realify_state(s, model.basis, model.spec)[index]),
            of_estimate=lambda mean: float(mean[index]),
        )

    @classmethod
    def constant(cls, value: float) -> "MomentFunctional":
        return cls(of_state=lambda s: value, of_estimate=lambda mean: value)


def error_covariance_mc(pairs: list, f: MomentFunctional, g: MomentFunctional) -> np.ndarray:
    """Ensemble error covariance E[(f(X)-pi(f)) (g(X)-pi(g))] over time.

    ``pairs`` holds (truth_trajectory, estimate_path) replicas; the estimate
    path carries one posterior-mean vector (real coordinates) per time point.
    """
    if not pairs:
        raise ParticleError("need at least one (truth, estimate) replica")
    n_times = min(len(t.states) for t, _ in pairs)
    out = np.zeros(n_times)
    for traj, est in pairs:
        est = np.atleast_2d(np.asarray(est, dtype=float))
        if est.shape[0] < n_times:
            raise ParticleError("estimate path shorter than trajectory")
        for k in range(n_times):
            df = f.of_state(traj.states[k]) - f.of_estimate(est[k])
            dg = g.of_state(traj.states[k]) - g.of_estimate(est[k])
            out[k] += df * dg
    return out / len(pairs)
