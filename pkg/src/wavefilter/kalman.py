"""Linearized (first-order) filter: Kalman mean, Riccati and Chandrasekhar.

The filter runs on the real-ified 2M-dimensional system

    d xhat = [A(t) - K(t) h] xhat dt + K(t) dY,     K = P h^T R^-1,

with the error covariance P solving the matrix Riccati equation

    dP/dt = A P + P A^T - P h^T R^-1 h P + F,

where F is the state-noise covariance rate (B Q B^* for the Gaussian part,
B Lambda B^* for the jumps).  The Chandrasekhar factorization integrates the
time-invariant case through L, K instead,

    dL/dt = (A - K h) L,  L(0) = I,
    dK/dt = L Pdot(0) L^T h^T R^-1,  K(0) = P(0) h^T R^-1,

and recovers P by quadrature P(t) = P(0) + int_0^t L Pdot(0) L^T dr.

All covariance steps symmetrize and check positive semidefiniteness:
eigenvalues inside a small negative roundoff band are clipped to zero,
anything worse is a hard error (scheme failure, not roundoff).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .integrator import ADDITIVE, SignalModel
from .noise import NoiseSpec
from .observation import ObservationOperator
from .spectral import LinearizedOperator

PSD_TOL = 1e-8


class RiccatiError(RuntimeError):
    pass


def _as_matrix(amat) -> np.ndarray:
    if isinstance(amat, LinearizedOperator):
        return amat.matrix
    return np.asarray(amat, dtype=float)


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def psd_repair(mat: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetrize and clip eigenvalues in (-tol*scale, 0); fail below that."""
    mat = _symmetrize(mat)
    eigs, vecs = np.linalg.eigh(mat)
    scale = max(float(np.max(np.abs(eigs))), 1e-300)
    if eigs[0] < -tol * scale:
        raise RiccatiError(
            f"covariance lost positive semidefiniteness (min eig {eigs[0]:.3e}, scale {scale:.3e})"
        )
    if eigs[0] < 0:
        eigs = np.clip(eigs, 0.0, None)
        mat = _symmetrize(vecs @ np.diag(eigs) @ vecs.T)
    return mat


@dataclass
class RiccatiState:
    """Error covariance P and its forcing F, both real symmetric."""

    P: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        if self.P.shape != self.F.shape:
            raise RiccatiError(f"P shape {self.P.shape} != F shape {self.F.shape}")
        if np.max(np.abs(self.P - self.P.T)) > 1e-10 * max(1.0, np.max(np.abs(self.P))):
            raise RiccatiError("P must be symmetric")
        self.P = psd_repair(self.P)


@dataclass
class KalmanState:
    mean: np.ndarray
    cov: RiccatiState
    time: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        if self.mean.shape[0] != self.cov.P.shape[0]:
            raise RiccatiError("mean dimension does not match covariance")


def _gain_ops(op: ObservationOperator):
    if not op.linear:
        raise RiccatiError("the linearized filter requires a linear observation operator")
    h = op.hmat
    rinv = op.noise_cov_inv
    return h, rinv, h.T @ rinv


def riccati_rhs(P: np.ndarray, amat, op: ObservationOperator, F: np.ndarray) -> np.ndarray:
    """A P + P A^T - P h^T R^-1 h P + F, symmetrized."""
    a = _as_matrix(amat)
    h, rinv, _ = _gain_ops(op)
    P = np.asarray(P, dtype=float)
    hp = h @ P
    rhs = a @ P + P @ a.T - hp.T @ rinv @ hp + np.asarray(F, dtype=float)
    return _symmetrize(rhs)


def _rk4(rhs, y, dt):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def riccati_step(P: np.ndarray, amat, op: ObservationOperator, F: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order step with post-step symmetrization/repair."""
    out = _rk4(lambda q: riccati_rhs(q, amat, op, F), np.asarray(P, dtype=float), dt)
    return psd_repair(out)


@dataclass
class RiccatiSolution:
    times: np.ndarray
    P_path: list
    state: RiccatiState

    @property
    def final(self) -> np.ndarray:
        return self.state.P


def riccati_integrate(
    P0: np.ndarray,
    amat,
    op: ObservationOperator,
    F: np.ndarray,
    t_end: float,
    dt: float,
    record_every: int = 1,
) -> RiccatiSolution:
    """Integrate the Riccati equation on [0, t_end]."""
    if dt <= 0 or t_end < dt:
        raise RiccatiError(f"need 0 < dt <= t_end, got dt={dt} t_end={t_end}")
    P = psd_repair(np.asarray(P0, dtype=float))
    n_steps = int(round(t_end / dt))
    times = [0.0]
    path = [P.copy()]
    for n in range(n_steps):
        P = riccati_step(P, amat, op, F, dt)
        if (n + 1) % record_every == 0 or n == n_steps - 1:
            times.append((n + 1) * dt)
            path.append(P.copy())
    return RiccatiSolution(times=np.asarray(times), P_path=path, state=RiccatiState(P=P, F=np.asarray(F, dtype=float)))


def pdot0(P0: np.ndarray, amat, op: ObservationOperator, F: np.ndarray) -> np.ndarray:
    """Initial covariance slope dP/dt(0).

    Equal to the Riccati right-hand side at P0: the quadratic term enters
    with the gain-consistent negative sign -P0 h^T R^-1 h P0.
    """
    return riccati_rhs(P0, amat, op, F)


@dataclass
class ChandrasekharState:
    """Factorized Riccati state: transition factor L and gain K."""

    L: np.ndarray
    K: np.ndarray
    pdot0: np.ndarray
    P0: np.ndarray

    @classmethod
    def initial(cls, P0: np.ndarray, amat, op: ObservationOperator, F: np.ndarray) -> "ChandrasekharState":
        P0 = psd_repair(np.asarray(P0, dtype=float))
        _, _, ht_rinv = _gain_ops(op)
        return cls(
            L=np.eye(P0.shape[0]),
            K=P0 @ ht_rinv,
            pdot0=pdot0(P0, amat, op, F),
            P0=P0,
        )


@dataclass
class ChandrasekharSolution:
    times: np.ndarray
    K_path: list
    P_path: list

    @property
    def final_P(self) -> np.ndarray:
        return self.P_path[-1]

    @property
    def final_K(self) -> np.ndarray:
        return self.K_path[-1]


def chandrasekhar_integrate(
    cstate: ChandrasekharState,
    amat,
    op: ObservationOperator,
    t_end: float,
    dt: float,
    record_every: int = 1,
) -> ChandrasekharSolution:
    """Co-integrate (L, K) with RK4; accumulate P by trapezoidal quadrature."""
    if dt <= 0 or t_end < dt:
        raise RiccatiError(f"need 0 < dt <= t_end, got dt={dt} t_end={t_end}")
    a = _as_matrix(amat)
    h, _, ht_rinv = _gain_ops(op)
    pd0 = cstate.pdot0

    def rhs(y):
        L, K = y
        dL = (a - K @ h) @ L
        dK = L @ pd0 @ L.T @ ht_rinv
        return (dL, dK)

    def add(y, scale, dy):
        return (y[0] + scale * dy[0], y[1] + scale * dy[1])

    L, K = cstate.L.copy(), cstate.K.copy()
    P = cstate.P0.copy()
    integrand_prev = L @ pd0 @ L.T
    n_steps = int(round(t_end / dt))
    times = [0.0]
    k_path = [K.copy()]
    p_path = [P.copy()]
    for n in range(n_steps):
        y = (L, K)
        k1 = rhs(y)
        k2 = rhs(add(y, 0.5 * dt, k1))
        k3 = rhs(add(y, 0.5 * dt, k2))
        k4 = rhs(add(y, dt, k3))
        L = L + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        K = K + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        integrand = L @ pd0 @ L.T
        P = _symmetrize(P + 0.5 * dt * (integrand_prev + integrand))
        integrand_prev = integrand
        if (n + 1) % record_every == 0 or n == n_steps - 1:
            times.append((n + 1) * dt)
            k_path.append(K.copy())
            p_path.append(psd_repair(P))
    return ChandrasekharSolution(times=np.asarray(times), K_path=k_path, P_path=p_path)


def kalman_step_ito(
    kstate: KalmanState, dY: np.ndarray, dt: float, amat, op: ObservationOperator
) -> KalmanState:
    """Semi-implicit Euler for the mean with the current gain; RK4 for P."""
    a = _as_matrix(amat)
    h, _, ht_rinv = _gain_ops(op)
    P = kstate.cov.P
    gain = P @ ht_rinv
    closed_loop = a - gain @ h
    lhs = np.eye(a.shape[0]) - dt * closed_loop
    mean = np.linalg.solve(lhs, kstate.mean + gain @ np.asarray(dY, dtype=float))
    P_new = riccati_step(P, amat, op, kstate.cov.F, dt)
    return KalmanState(
        mean=mean,
        cov=RiccatiState(P=P_new, F=kstate.cov.F),
        time=kstate.time + dt,
    )


def kalman_step_whitenoise(
    kstate: KalmanState, y_sample: np.ndarray, dt: float, amat, op: ObservationOperator
) -> KalmanState:
    """Same scheme with Y dt in place of dY (exact bridge to the Ito step)."""
    return kalman_step_ito(kstate, np.asarray(y_sample, dtype=float) * dt, dt, amat, op)


def forcing_matrix(noise: NoiseSpec, model: SignalModel) -> np.ndarray:
    """Real-ified state-noise covariance rate F for the additive coupling.

    Complex Wiener coefficients split their rate lambda_i evenly between the
    Re and Im lanes; the jump construction has real amplitudes, so its rate
    Lambda_ii loads the Re lane only.  Second-order models pick up the energy
    scaling omega on the displacement block, and B's per-mode scaling enters
    squared.
    """
    if model.coupling != ADDITIVE:
        raise RiccatiError("forcing_matrix applies to the additive noise coupling")
    if noise.dim != model.noise_dim:
        raise RiccatiError(f"noise dim {noise.dim} != model noise dim {model.noise_dim}")
    basis = model.basis
    scale = np.ones(noise.dim)
    if model.spec.second_order:
        scale[: basis.n_modes] = basis.eigA
    if model.b_scale is not None:
        scale = scale * model.b_scale
    lam = noise.wiener.lambdas * scale**2
    jump_rate = np.diag(noise.jump.lambda_matrix) * scale**2
    diag = np.empty(2 * noise.dim)
    diag[0::2] = lam / 2.0 + jump_rate
    diag[1::2] = lam / 2.0
    return np.diag(diag)


@dataclass
class KalmanFilterResult:
    times: np.ndarray
    means: np.ndarray  # (n_steps+1, dim)
    traces: np.ndarray
    hhat: np.ndarray  # h @ mean at the start of each interval
    P_path: list
    final: KalmanState


def run_kalman_filter(
    record,
    mean0: np.ndarray,
    P0: np.ndarray,
    F: np.ndarray,
    op: ObservationOperator,
    amat_provider,
    record_P: bool = False,
) -> KalmanFilterResult:
    """Drive the Kalman recursion along an observation record.

    ``amat_provider`` is either a fixed operator/matrix or a callable
    ``(mean, time) -> operator`` for per-step re-linearization.
    """
    dt = record.dt
    incs = record.as_ito_increments()
    kstate = KalmanState(mean=np.asarray(mean0, dtype=float), cov=RiccatiState(P=P0, F=F))
    h_rows = op.hmat
    times = [0.0]
    means = [kstate.mean.copy()]
    traces = [float(np.trace(kstate.cov.P))]
    hhat = []
    p_path = [kstate.cov.P.copy()] if record_P else []
    for n in range(incs.shape[0]):
        amat = amat_provider(kstate.mean, kstate.time) if callable(amat_provider) else amat_provider
        hhat.append(h_rows @ kstate.mean)
        kstate = kalman_step_ito(kstate, incs[n], dt, amat, op)
        times.append(kstate.time)
        means.append(kstate.mean.copy())
        traces.append(float(np.trace(kstate.cov.P)))
        if record_P:
            p_path.append(kstate.cov.P.copy())
    return KalmanFilterResult(
        times=np.asarray(times),
        means=np.asarray(means),
        traces=np.asarray(traces),
        hhat=np.asarray(hhat),
        P_path=p_path,
        final=kstate,
    )


def kalman_mean_ensemble(
    incs: np.ndarray,  # (n_replicas, n_steps, obs_dim) Ito increments
    means0: np.ndarray,  # (n_replicas, dim)
    P0: np.ndarray,
    F: np.ndarray,
    op: ObservationOperator,
    amat,
    dt: float,
) -> np.ndarray:
    """Vectorized mean recursion over replicas sharing one covariance path.

    P does not depend on the data, so the per-step gain and the semi-implicit
    solve are factored once and applied to all replicas; the scheme is
    identical to :func:`kalman_step_ito` per replica.
    """
    a = _as_matrix(amat)
    h, _, ht_rinv = _gain_ops(op)
    n_rep, n_steps, _ = incs.shape
    dim = a.shape[0]
    means = np.empty((n_rep, n_steps + 1, dim))
    means[:, 0, :] = means0
    x = np.asarray(means0, dtype=float).T.copy()  # (dim, n_rep)
    P = psd_repair(np.asarray(P0, dtype=float))
    eye = np.eye(dim)
    for n in range(n_steps):
        gain = P @ ht_rinv
        lhs = eye - dt * (a - gain @ h)
        lu = scipy.linalg.lu_factor(lhs)
        x = scipy.linalg.lu_solve(lu, x + gain @ incs[:, n, :].T)
        means[:, n + 1, :] = x.T
        P = riccati_step(P, amat, op, F, dt)
    return means
