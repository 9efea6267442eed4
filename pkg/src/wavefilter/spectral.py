"""Truncated spectral representation of the wave models.

Three model families share one abstract structure: a self-adjoint operator A
diagonal in the periodic Fourier basis, a free group e^{-iAt}, and a pointwise
nonlinearity J evaluated pseudo-spectrally on the collocation grid.

State layout
------------
A state is a flat complex coefficient vector over the mode lattice.  For the
Schrodinger (paraxial) model the state is the single field psi, with
``eigA[k] = |2*pi*k/L|**2`` and the free flow a per-mode phase rotation.  For
the second-order models (Klein-Gordon, sine-Gordon) the state is the pair
``(psi, v = d/dt psi)`` stacked as ``[psi_modes, v_modes]``, with
``eigA[k] = omega_k = sqrt(|2*pi*k/L|**2 + k0**2)`` and the free flow the
exact 2x2 rotation block ``[[cos(w t), sin(w t)/w], [-w sin(w t), cos(w t)]]``.

Real-ification
--------------
The power nonlinearity |psi|^(p-1) psi is not complex-differentiable, so every
linear-algebra consumer (Kalman, Riccati) works on real vectors with (Re, Im)
interleaved per complex entry.  Second-order models are real-ified in energy
coordinates ``(omega*psi, v)``, the natural isometry onto L2 (+) L2; in these
coordinates the free generator is exactly skew-symmetric.

Transforms use the unitary ("ortho") DFT convention so that coefficient and
grid L2 norms agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ModelKind(str, Enum):
    PARAXIAL_NLS = "ParaxialNLS"
    KLEIN_GORDON = "KleinGordon"
    SINE_GORDON = "SineGordon"


#: Model kinds whose state carries the (psi, v) pair.
SECOND_ORDER_KINDS = (ModelKind.KLEIN_GORDON, ModelKind.SINE_GORDON)


class SpectralError(ValueError):
    """Raised on invalid model/basis/state combinations."""


@dataclass(frozen=True)
class ModelSpec:
    """Parameters selecting one wave model.

    Parameters
    ----------
    kind : ModelKind
        ParaxialNLS, KleinGordon, or SineGordon.
    p : int
        Odd power >= 3 of the |psi|^(p-1) psi nonlinearity (NLS / Klein-Gordon).
    sign : int
        +1 or -1, multiplies the power nonlinearity (focusing / defocusing).
    k0 : float
        Mass parameter in B = sqrt(-Laplace + k0**2 I); must be > 0 for the
        second-order models so that B is invertible.
    g : float
        Sine-Gordon coupling of the g*sin(u) term.
    dimension : int
        Spatial dimension, 1 or 2.
    modes_per_dim : int
        Even number of Fourier modes per dimension.
    domain_length : float
        Periodic box size L.
    linear : bool
        Drop the nonlinearity entirely (J = 0); used by the linear(ized)
        benchmarks and the Kalman comparison runs.
    dealias : bool
        Apply the 2/3-rule mask when evaluating the nonlinearity.
    """

    kind: ModelKind
    p: int = 3
    sign: int = 1
    k0: float = 1.0
    g: float = 1.0
    dimension: int = 1
    modes_per_dim: int = 4
    domain_length: float = 2.0 * np.pi
    linear: bool = False
    dealias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.p < 3 or self.p % 2 == 0:
            raise SpectralError(f"p must be an odd integer >= 3, got {self.p}")
        if self.sign not in (-1, 1):
            raise SpectralError(f"sign must be +1 or -1, got {self.sign}")
        if self.k0 < 0:
            raise SpectralError(f"k0 must be >= 0, got {self.k0}")
        if self.dimension not in (1, 2):
            raise SpectralError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.modes_per_dim < 2 or self.modes_per_dim % 2 != 0:
            raise SpectralError(
                f"modes_per_dim must be an even integer >= 2, got {self.modes_per_dim}"
            )
        if self.domain_length <= 0:
            raise SpectralError(f"domain_length must be > 0, got {self.domain_length}")
        if self.kind in SECOND_ORDER_KINDS and self.k0 <= 0:
            raise SpectralError(
                f"{self.kind.value} requires k0 > 0 (B must be invertible)"
            )

    @property
    def second_order(self) -> bool:
        return self.kind in SECOND_ORDER_KINDS


@dataclass(frozen=True)
class SpectralBasis:
    """Mode lattice, eigenvalues of A, and transform metadata."""

    wavevectors: np.ndarray  # (n_modes, dimension) integers, FFT ordering
    eigA: np.ndarray  # (n_modes,) real; |2 pi k/L|^2 or omega_k
    grid_shape: tuple  # modes_per_dim per axis
    domain_length: float
    second_order: bool

    @property
    def n_modes(self) -> int:
        return self.eigA.shape[0]

    @property
    def state_dim(self) -> int:
        """Complex dimension of the flat state vector."""
        return 2 * self.n_modes if self.second_order else self.n_modes

    @property
    def real_dim(self) -> int:
        return 2 * self.state_dim

    @property
    def dealias_mask(self) -> np.ndarray:
        # 2/3-rule: keep |k_i| <= modes_per_dim/3 on every axis
        cutoff = self.grid_shape[0] / 3.0
        return np.all(np.abs(self.wavevectors) <= cutoff, axis=1)


@dataclass
class FieldState:
    """Spectral coefficients of one field configuration.

    ``primary`` holds psi; ``secondary`` holds v = d/dt psi and is present
    exactly for the second-order models.
    """

    primary: np.ndarray
    secondary: np.ndarray | None = None
    time: float = 0.0

    def flat(self) -> np.ndarray:
        if self.secondary is None:
            return np.asarray(self.primary, dtype=complex)
        return np.concatenate(
            [np.asarray(self.primary, dtype=complex), np.asarray(self.secondary, dtype=complex)]
        )

    def copy(self) -> "FieldState":
        return FieldState(
            primary=np.array(self.primary, dtype=complex),
            secondary=None if self.secondary is None else np.array(self.secondary, dtype=complex),
            time=self.time,
        )


@dataclass
class LinearizedOperator:
    """Real-ified generator A(t) = -iA + J'(X0), dense (2M x 2M)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise SpectralError(f"operator matrix must be square, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise SpectralError("operator matrix has non-finite entries")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_basis(spec: ModelSpec) -> SpectralBasis:
    """Enumerate the centered integer mode lattice and the eigenvalues of A."""
    m = spec.modes_per_dim
    freqs = np.rint(np.fft.fftfreq(m) * m).astype(int)  # {0,..,m/2-1,-m/2,..,-1}
    if spec.dimension == 1:
        kvecs = freqs.reshape(-1, 1)
    else:
        ka, kb = np.meshgrid(freqs, freqs, indexing="ij")
        kvecs = np.stack([ka.ravel(), kb.ravel()], axis=1)
    ksq = np.sum((2.0 * np.pi * kvecs / spec.domain_length) ** 2, axis=1)
    if spec.second_order:
        if spec.k0 <= 0:
            raise SpectralError(f"{spec.kind.value} requires k0 > 0")
        eig = np.sqrt(ksq + spec.k0**2)
    else:
        eig = ksq
    return SpectralBasis(
        wavevectors=kvecs,
        eigA=eig,
        grid_shape=(m,) * spec.dimension,
        domain_length=spec.domain_length,
        second_order=spec.second_order,
    )


# ---------------------------------------------------------------------------
# Unitary grid transforms (Parseval-exact round trip)
# ---------------------------------------------------------------------------

def to_physical(coeffs: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Coefficients -> collocation-grid values; acts on the last axis."""
    shape = coeffs.shape[:-1] + basis.grid_shape
    axes = tuple(range(-len(basis.grid_shape), 0))
    grid = np.fft.ifftn(coeffs.reshape(shape), axes=axes, norm="ortho")
    return grid.reshape(coeffs.shape)


def to_spectral(grid: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Collocation-grid values -> coefficients; acts on the last axis."""
    shape = grid.shape[:-1] + basis.grid_shape
    axes = tuple(range(-len(basis.grid_shape), 0))
    coeffs = np.fft.fftn(grid.reshape(shape), axes=axes, norm="ortho")
    return coeffs.reshape(grid.shape)


def transform_matrix(basis: SpectralBasis) -> np.ndarray:
    """Dense unitary matrix U with grid = U @ coeffs."""
    eye = np.eye(basis.n_modes, dtype=complex)
    return to_physical(eye, basis).T


# ---------------------------------------------------------------------------
# Free propagator
# ---------------------------------------------------------------------------

def propagate_flat(states: np.ndarray, basis: SpectralBasis, spec: ModelSpec, dt: float) -> np.ndarray:
    """Apply e^{-iA dt} to flat state vectors (vectorized over leading axes)."""
    if dt < 0:
        raise SpectralError(f"dt must be >= 0, got {dt}")
    states = np.asarray(states, dtype=complex)
    m = basis.n_modes
    if not spec.second_order:
        return states * np.exp(-1j * basis.eigA * dt)
    omega = basis.eigA
    c = np.cos(omega * dt)
    s = np.sin(omega * dt)
    psi = states[..., :m]
    v = states[..., m:]
    out = np.empty_like(states)
    out[..., :m] = c * psi + (s / omega) * v
    out[..., m:] = -omega * s * psi + c * v
    return out


def apply_free_propagator(state: FieldState, basis: SpectralBasis, spec: ModelSpec, dt: float) -> FieldState:
    """Exact free flow over dt; no time-step error."""
    flat = propagate_flat(state.flat(), basis, spec, dt)
    return state_from_flat(flat, basis, spec, time=state.time + dt)


def state_from_flat(flat: np.ndarray, basis: SpectralBasis, spec: ModelSpec, time: float = 0.0) -> FieldState:
    m = basis.n_modes
    if spec.second_order:
        return FieldState(primary=flat[:m].copy(), secondary=flat[m:].copy(), time=time)
    return FieldState(primary=flat.copy(), secondary=None, time=time)


# ---------------------------------------------------------------------------
# Nonlinearity J and its real Jacobian
# ---------------------------------------------------------------------------

def _power_map(grid: np.ndarray, p: int) -> np.ndarray:
    # |z|^(p-1) z, p odd
    return np.abs(grid) ** (p - 1) * grid


def nonlinearity_flat(states: np.ndarray, basis: SpectralBasis, spec: ModelSpec) -> np.ndarray:
    """J evaluated pseudo-spectrally; returns an increment with state layout.

    For the second-order models the increment lands only in the v component.
    """
    states = np.asarray(states, dtype=complex)
    out = np.zeros_like(states)
    if spec.linear:
        return out
    m = basis.n_modes
    psi = states[..., :m]
    grid = to_physical(psi, basis)
    if spec.kind == ModelKind.SINE_GORDON:
        mapped = spec.g * np.sin(grid)
    else:
        mapped = spec.sign * _power_map(grid, spec.p)
    coeffs = to_spectral(mapped, basis)
    if spec.dealias:
        coeffs = coeffs * basis.dealias_mask
    if spec.second_order:
        out[..., m:] = coeffs
    else:
        out[..., :m] = coeffs
    return out


def eval_nonlinearity(state: FieldState, basis: SpectralBasis, spec: ModelSpec) -> FieldState:
    flat = nonlinearity_flat(state.flat(), basis, spec)
    return state_from_flat(flat, basis, spec, time=state.time)


def sobolev_norm(state: FieldState, basis: SpectralBasis, j: int = 0) -> float:
    """sqrt(sum_k eigA_k^(2j) |phi_k|^2), summed over state components."""
    if j < 0 or j > 4:
        raise SpectralError(f"sobolev order j must be in 0..4, got {j}")
    w = basis.eigA ** (2 * j)
    total = np.sum(w * np.abs(np.asarray(state.primary)) ** 2)
    if state.secondary is not None:
        total += np.sum(w * np.abs(np.asarray(state.secondary)) ** 2)
    return float(np.sqrt(total))


def energy_norm(state: FieldState, basis: SpectralBasis) -> float:
    """Norm of the natural state space: sqrt(sum w^2|psi|^2 + |v|^2) for the
    second-order models (D(B) (+) L2), plain L2 for Schrodinger."""
    if state.secondary is None:
        return float(np.linalg.norm(state.primary))
    total = np.sum(basis.eigA**2 * np.abs(state.primary) ** 2)
    total += np.sum(np.abs(state.secondary) ** 2)
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# Real-ification (interleaved Re/Im), energy coordinates for 2nd-order models
# ---------------------------------------------------------------------------

def realify_block(states: np.ndarray, basis: SpectralBasis, spec: ModelSpec) -> np.ndarray:
    """Flat complex states (..., D) -> real coordinates (..., 2D).

    Second-order models are scaled into energy coordinates (omega*psi, v)
    before interleaving so that the real-ified free generator is skew.
    """
    states = np.asarray(states, dtype=complex)
    m = basis.n_modes
    if spec.second_order:
        scaled = states.copy()
        scaled[..., :m] = scaled[..., :m] * basis.eigA
    else:
        scaled = states
    out = np.empty(states.shape[:-1] + (2 * states.shape[-1],), dtype=float)
    out[..., 0::2] = scaled.real
    out[..., 1::2] = scaled.imag
    return out


def unrealify_block(reals: np.ndarray, basis: SpectralBasis, spec: ModelSpec) -> np.ndarray:
    """Inverse of :func:`realify_block`."""
    reals = np.asarray(reals, dtype=float)
    scaled = reals[..., 0::2] + 1j * reals[..., 1::2]
    m = basis.n_modes
    if spec.second_order:
        out = scaled.copy()
        out[..., :m] = out[..., :m] / basis.eigA
        return out
    return scaled


def realify_state(state: FieldState, basis: SpectralBasis, spec: ModelSpec) -> np.ndarray:
    return realify_block(state.flat(), basis, spec)


def state_from_realified(vec: np.ndarray, basis: SpectralBasis, spec: ModelSpec, time: float = 0.0) -> FieldState:
    return state_from_flat(unrealify_block(vec, basis, spec), basis, spec, time=time)


def realify_cmatrix(cmat: np.ndarray) -> np.ndarray:
    """Real-ify a C-linear matrix under the interleaved (Re, Im) layout."""
    cmat = np.asarray(cmat, dtype=complex)
    m, n = cmat.shape
    out = np.zeros((2 * m, 2 * n), dtype=float)
    out[0::2, 0::2] = cmat.real
    out[0::2, 1::2] = -cmat.imag
    out[1::2, 0::2] = cmat.imag
    out[1::2, 1::2] = cmat.real
    return out


def free_generator_matrix(basis: SpectralBasis, spec: ModelSpec) -> np.ndarray:
    """Real-ification of -iA (energy coordinates for second-order models)."""
    m = basis.n_modes
    if not spec.second_order:
        return realify_cmatrix(np.diag(-1j * basis.eigA))
    # blocks [[0, w], [-w, 0]] on (w1, w2) = (omega psi, v), real entries
    dim = 4 * m
    out = np.zeros((dim, dim))
    idx = np.arange(m)
    omega = basis.eigA
    for off in (0, 1):  # Re and Im lanes transform identically
        out[2 * idx + off, 2 * (m + idx) + off] = omega
        out[2 * (m + idx) + off, 2 * idx + off] = -omega
    return out


def _power_jacobian_blocks(grid: np.ndarray, p: int) -> np.ndarray:
    """Real 2x2 Jacobian of z -> |z|^(p-1) z per grid point, block-diagonal."""
    a = grid.real
    b = grid.imag
    r2 = a * a + b * b
    q = (p - 1) // 2
    rq = r2**q
    rqm1 = r2 ** (q - 1) if q > 1 else np.ones_like(r2)
    daa = rq + 2 * q * a * a * rqm1
    dab = 2 * q * a * b * rqm1
    dbb = rq + 2 * q * b * b * rqm1
    g = grid.shape[0]
    out = np.zeros((2 * g, 2 * g))
    idx = np.arange(g)
    out[2 * idx, 2 * idx] = daa
    out[2 * idx, 2 * idx + 1] = dab
    out[2 * idx + 1, 2 * idx] = dab
    out[2 * idx + 1, 2 * idx + 1] = dbb
    return out


def eval_jacobian(state0: FieldState, basis: SpectralBasis, spec: ModelSpec) -> LinearizedOperator:
    """Real-ified A(t) = -iA + J'(X0) about the basic state X0.

    The cubic/power branch uses the non-holomorphic real Jacobian per grid
    point, conjugated by the unitary transform; sine-Gordon linearizes to
    multiplication by g*cos(u0).
    """
    mat = free_generator_matrix(basis, spec)
    if spec.linear:
        return LinearizedOperator(mat)
    m = basis.n_modes
    u_grid = to_physical(np.asarray(state0.primary, dtype=complex), basis)
    umat = transform_matrix(basis)
    ur = realify_cmatrix(umat)
    uinv_r = realify_cmatrix(umat.conj().T)
    if spec.kind == ModelKind.SINE_GORDON:
        gblocks = realify_cmatrix(np.diag(spec.g * np.cos(u_grid)))
    else:
        gblocks = spec.sign * _power_jacobian_blocks(u_grid, spec.p)
    jpsi = uinv_r @ gblocks @ ur  # d(J coeffs)/d(psi coeffs), real
    if spec.second_order:
        # increment lands in v; input psi = w1/omega in energy coordinates
        col_scale = np.diag(np.repeat(1.0 / basis.eigA, 2))
        mat = mat.copy()
        mat[2 * m :, : 2 * m] += jpsi @ col_scale
    else:
        mat = mat + jpsi
    return LinearizedOperator(mat)
