"""Observation models and likelihood factors.

Two equivalent sensor conventions are produced from a simulated signal path:

* Ito increments   dY_n = h(X_n) dt + sqrt(dt) R^(1/2) xi_n
* white-noise form Y_n  = h(X_n) + R^(1/2) xi_n / sqrt(dt)

matched so that Y_n dt and dY_n are identical in law (and identical samples
under matched seeds).  The per-step log-likelihood factors consumed by the
filters are the exponents of the Bayes weight:

    ito:         h(x).R^-1.dY - 1/2 |h(x)|^2_{R^-1} dt
    white noise: (h(x).R^-1.Y - 1/2 |h(x)|^2_{R^-1}) dt

Linear functionals are stored as rows over the real-ified state coordinates,
so the same operator drives the particle weights and the Kalman gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import FieldState, ModelSpec, SpectralBasis, realify_block, transform_matrix


class ObservationError(ValueError):
    pass


def functional_row(
    r: np.ndarray, part: str, basis: SpectralBasis, spec: ModelSpec
) -> np.ndarray:
    """Real row over real-ified coordinates reading Re or Im of sum_k r_k z_k.

    ``r`` acts on the physical complex coefficients; the row absorbs the
    energy scaling of second-order models.
    """
    r = np.asarray(r, dtype=complex).copy()
    if r.shape[0] != basis.state_dim:
        raise ObservationError(
            f"functional length {r.shape[0]} does not match state dim {basis.state_dim}"
        )
    if spec.second_order:
        r[: basis.n_modes] = r[: basis.n_modes] / basis.eigA
    row = np.empty(2 * r.shape[0])
    if part == "re":
        row[0::2] = r.real
        row[1::2] = -r.imag
    elif part == "im":
        row[0::2] = r.imag
        row[1::2] = r.real
    else:
        raise ObservationError(f"part must be 're' or 'im', got {part!r}")
    return row


def mode_functional(
    basis: SpectralBasis,
    spec: ModelSpec,
    index: int,
    part: str = "re",
    component: str = "primary",
) -> np.ndarray:
    """Row reading Re/Im of one spectral coefficient."""
    if not 0 <= index < basis.n_modes:
        raise ObservationError(f"mode index {index} out of range")
    r = np.zeros(basis.state_dim, dtype=complex)
    offset = basis.n_modes if component == "secondary" else 0
    if component == "secondary" and not spec.second_order:
        raise ObservationError("secondary component requested for a first-order model")
    r[offset + index] = 1.0
    return functional_row(r, part, basis, spec)


def grid_functional(
    basis: SpectralBasis,
    spec: ModelSpec,
    grid_index: int,
    part: str = "re",
    component: str = "primary",
) -> np.ndarray:
    """Row reading Re/Im of the field value at one collocation point."""
    if not 0 <= grid_index < basis.n_modes:
        raise ObservationError(f"grid index {grid_index} out of range")
    umat = transform_matrix(basis)
    r = np.zeros(basis.state_dim, dtype=complex)
    offset = basis.n_modes if component == "secondary" else 0
    if component == "secondary" and not spec.second_order:
        raise ObservationError("secondary component requested for a first-order model")
    r[offset : offset + basis.n_modes] = umat[grid_index, :]
    return functional_row(r, part, basis, spec)


@dataclass
class ObservationOperator:
    """Finite list of linear functionals (or a declared nonlinear map)."""

    basis: SpectralBasis
    spec: ModelSpec
    hmat: np.ndarray | None = None  # (N, 2D) real rows, linear case
    h_callable: object | None = None  # states (n, D) complex -> (n, N) real
    noise_cov: np.ndarray | None = None
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if (self.hmat is None) == (self.h_callable is None):
            raise ObservationError("exactly one of hmat / h_callable must be given")
        if self.hmat is not None:
            self.hmat = np.atleast_2d(np.asarray(self.hmat, dtype=float))
            if self.hmat.shape[1] != self.basis.real_dim:
                raise ObservationError(
                    f"hmat width {self.hmat.shape[1]} != real state dim {self.basis.real_dim}"
                )
            n = self.hmat.shape[0]
        else:
            if not self.labels:
                raise ObservationError("nonlinear operators must declare obs labels")
            n = len(self.labels)
        if n < 1:
            raise ObservationError("at least one observation functional is required")
        if self.noise_cov is None:
            self.noise_cov = np.eye(n)
        self.noise_cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if self.noise_cov.shape != (n, n):
            raise ObservationError(f"noise_cov must be {n}x{n}")
        if np.max(np.abs(self.noise_cov - self.noise_cov.T)) > 1e-12:
            raise ObservationError("noise_cov must be symmetric")
        eigs = np.linalg.eigvalsh(self.noise_cov)
        if eigs[0] < -1e-12 * max(1.0, eigs[-1]):
            raise ObservationError("noise_cov must be positive semidefinite")

    @property
    def obs_dim(self) -> int:
        return self.hmat.shape[0] if self.hmat is not None else len(self.labels)

    @property
    def linear(self) -> bool:
        return self.hmat is not None

    def require_spd(self):
        eigs = np.linalg.eigvalsh(self.noise_cov)
        if eigs[0] <= 0:
            raise ObservationError("filters require strictly positive observation noise")

    @property
    def noise_cov_inv(self) -> np.ndarray:
        self.require_spd()
        return np.linalg.inv(self.noise_cov)

    @property
    def noise_cov_sqrt(self) -> np.ndarray:
        eigs, vecs = np.linalg.eigh(self.noise_cov)
        return vecs @ np.diag(np.sqrt(np.clip(eigs, 0.0, None))) @ vecs.T

    def evaluate_block(self, states: np.ndarray) -> np.ndarray:
        """h over a batch of flat complex states; shape (n, obs_dim)."""
        states = np.atleast_2d(np.asarray(states, dtype=complex))
        if self.hmat is not None:
            reals = realify_block(states, self.basis, self.spec)
            return reals @ self.hmat.T
        return np.atleast_2d(np.asarray(self.h_callable(states), dtype=float))

    def evaluate_state(self, state: FieldState) -> np.ndarray:
        return self.evaluate_block(state.flat()[None, :])[0]

    def operator_norm(self) -> float:
        """Growth constant C with |h(x)| <= C ||x|| (linear case)."""
        if self.hmat is None:
            raise ObservationError("operator norm is defined for linear functionals")
        return float(np.linalg.norm(self.hmat, ord=2))


def linear_observation(
    basis: SpectralBasis,
    spec: ModelSpec,
    rows: list,
    noise_cov: np.ndarray | None = None,
    labels: list | None = None,
) -> ObservationOperator:
    if not rows:
        raise ObservationError("at least one observation functional is required")
    hmat = np.stack([np.asarray(r, dtype=float) for r in rows])
    return ObservationOperator(
        basis=basis,
        spec=spec,
        hmat=hmat,
        noise_cov=noise_cov,
        labels=labels or [f"y_{i+1}" for i in range(hmat.shape[0])],
    )


ITO = "ito"
WHITENOISE = "whitenoise"


@dataclass
class ObservationRecord:
    """Sensor path aligned with the start of each trajectory interval.

    ``values[n]`` is dY over [t_n, t_n + dt] in Ito mode, or the white-noise
    sample Y(t_n) otherwise.
    """

    times: np.ndarray
    values: np.ndarray  # (n_steps, obs_dim)
    mode: str
    dt: float

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def as_ito_increments(self) -> np.ndarray:
        return self.values if self.mode == ITO else self.values * self.dt


def _observe(traj, op: ObservationOperator, rng: np.random.Generator, mode: str) -> ObservationRecord:
    if len(traj.states) < 2:
        raise ObservationError("trajectory must contain at least one step")
    dt = float(traj.times[1] - traj.times[0])
    flats = traj.flat_array()[:-1]  # state at the start of each interval
    h = op.evaluate_block(flats)
    n = h.shape[0]
    xi = rng.standard_normal((n, op.obs_dim))
    noise = xi @ op.noise_cov_sqrt.T
    if mode == ITO:
        values = h * dt + np.sqrt(dt) * noise
    else:
        values = h + noise / np.sqrt(dt)
    return ObservationRecord(times=traj.times[:-1].copy(), values=values, mode=mode, dt=dt)


def observe_ito(traj, op: ObservationOperator, rng: np.random.Generator) -> ObservationRecord:
    """Ito-form increments dY = h(X) dt + dZ along a trajectory."""
    return _observe(traj, op, rng, ITO)


def observe_whitenoise(traj, op: ObservationOperator, rng: np.random.Generator) -> ObservationRecord:
    """White-noise samples Y = h(X) + e with formal intensity 1/dt."""
    return _observe(traj, op, rng, WHITENOISE)


def log_increment_ito_block(
    h_values: np.ndarray, dY: np.ndarray, dt: float, op: ObservationOperator
) -> np.ndarray:
    """Kallianpur-Striebel exponent increments for a batch of h(x) rows."""
    rinv = op.noise_cov_inv
    lin = h_values @ rinv @ np.asarray(dY, dtype=float)
    quad = 0.5 * np.einsum("ni,ij,nj->n", h_values, rinv, h_values) * dt
    return lin - quad


def log_increment_wn_block(
    h_values: np.ndarray, y: np.ndarray, dt: float, op: ObservationOperator
) -> np.ndarray:
    rinv = op.noise_cov_inv
    lin = h_values @ rinv @ np.asarray(y, dtype=float)
    quad = 0.5 * np.einsum("ni,ij,nj->n", h_values, rinv, h_values)
    return (lin - quad) * dt


def likelihood_log_increment_ito(
    x: FieldState, dY: np.ndarray, dt: float, op: ObservationOperator
) -> float:
    """h(x).dY - 1/2 |h(x)|^2 dt, noise_cov-weighted."""
    h = op.evaluate_state(x)[None, :]
    return float(log_increment_ito_block(h, dY, dt, op)[0])


def likelihood_log_increment_wn(
    x: FieldState, y_sample: np.ndarray, dt: float, op: ObservationOperator
) -> float:
    """(<h(x), Y> - 1/2 |h(x)|^2) dt, noise_cov-weighted."""
    h = op.evaluate_state(x)[None, :]
    return float(log_increment_wn_block(h, y_sample, dt, op)[0])
