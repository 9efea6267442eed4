"""Sampling of the driving semimartingale increments.

The noise M is a Levy process split into a trace-class Q-Wiener part, built
from the eigen-expansion W(t) = sum_i sqrt(lambda_i) e_i beta_i(t), and a
compensated compound-Poisson part with per-mode intensities mu_i and jump
amplitudes a_i.  Truncation to the spectral basis makes Tr Q = sum lambda_i
and sum mu_i automatically finite.

Reproducibility: streams are counter-based (Philox keyed by a SeedSequence
spawn key built from a family tag and the step index), so identical
(seed, family, step) always reproduce the same increments bit for bit and
independent consumers can draw their slices in any order.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


class NoiseError(ValueError):
    pass


class RngStreams:
    """Deterministic family of counter-based generators.

    ``generator(family, *indices)`` derives an independent Philox stream from
    the root seed; the same arguments always yield the same stream.  Batched
    samplers draw a whole (n, dim) block from one stream so that entry i of
    the block is the increment of consumer i at that step.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, family: str, *indices: int) -> np.random.Generator:
        tag = zlib.crc32(family.encode("utf-8"))
        key = (tag,) + tuple(int(i) for i in indices)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class WienerSpec:
    """Eigenvalues lambda_i of the covariance Q, one per mode."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        if not np.all(np.isfinite(lam)):
            raise NoiseError("Q-Wiener eigenvalues must be finite")
        if np.any(lam < 0):
            raise NoiseError("Q-Wiener eigenvalues must be >= 0")
        object.__setattr__(self, "lambdas", lam)

    @property
    def dim(self) -> int:
        return self.lambdas.shape[0]

    @property
    def trace(self) -> float:
        return float(np.sum(self.lambdas))

    @classmethod
    def constant(cls, value: float, dim: int) -> "WienerSpec":
        return cls(np.full(dim, float(value)))

    @classmethod
    def zero(cls, dim: int) -> "WienerSpec":
        return cls(np.zeros(dim))


@dataclass(frozen=True)
class JumpSpec:
    """Compensated compound-Poisson specification.

    Per mode: jump counts are Poisson(mu_i dt) and each jump adds a_i (the
    default deterministic amplitude law); the compensator mu_i a_i dt is
    subtracted so increments are centered.  ``amplitude_sampler(rng, i, n)``
    may replace the fixed-amplitude law; only the first two moments are
    pinned, via ``lambda_matrix``.
    """

    rates: np.ndarray
    amplitudes: np.ndarray
    amplitude_sampler: object | None = None
    amplitude_second_moment: np.ndarray | None = None

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.rates, dtype=float))
        amp = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        if amp.shape[0] == 1 and mu.shape[0] > 1:
            amp = np.full_like(mu, amp[0])
        if mu.shape != amp.shape:
            raise NoiseError("jump rates and amplitudes must have matching length")
        if not np.all(np.isfinite(mu)) or np.any(mu < 0):
            raise NoiseError("jump rates must be finite and >= 0")
        object.__setattr__(self, "rates", mu)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def dim(self) -> int:
        return self.rates.shape[0]

    @property
    def lambda_matrix(self) -> np.ndarray:
        """Covariance rate Lambda; diagonal mu_i E[a_i^2] under independence."""
        m2 = self.amplitude_second_moment
        if m2 is None:
            m2 = self.amplitudes**2
        return np.diag(self.rates * np.asarray(m2, dtype=float))

    @classmethod
    def zero(cls, dim: int) -> "JumpSpec":
        return cls(np.zeros(dim), np.zeros(dim))


@dataclass
class NoiseIncrement:
    """One time step's sampled increment of M = W + compensated jumps."""

    dW: np.ndarray
    dJ: np.ndarray
    dt: float

    @property
    def total(self) -> np.ndarray:
        return self.dW + self.dJ


@dataclass(frozen=True)
class NoiseSpec:
    """Wiener and jump parts of one driving Levy process."""

    wiener: WienerSpec
    jump: JumpSpec

    def __post_init__(self):
        if self.wiener.dim != self.jump.dim:
            raise NoiseError(
                f"Wiener dim {self.wiener.dim} != jump dim {self.jump.dim}"
            )

    @property
    def dim(self) -> int:
        return self.wiener.dim

    @classmethod
    def wiener_only(cls, lambdas) -> "NoiseSpec":
        w = WienerSpec(lambdas)
        return cls(wiener=w, jump=JumpSpec.zero(w.dim))

    @classmethod
    def zero(cls, dim: int) -> "NoiseSpec":
        return cls(wiener=WienerSpec.zero(dim), jump=JumpSpec.zero(dim))


def _check_dt(dt: float):
    if not dt > 0:
        raise NoiseError(f"dt must be > 0, got {dt}")


def sample_wiener_block(spec: WienerSpec, dt: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """n independent Q-Wiener increments, complex, shape (n, dim).

    Per mode the real and imaginary parts are independent N(0, lambda_i dt/2),
    so E|dW_i|^2 = lambda_i dt.
    """
    _check_dt(dt)
    z = rng.standard_normal((n, spec.dim, 2))
    scale = np.sqrt(spec.lambdas * dt / 2.0)
    return scale * (z[..., 0] + 1j * z[..., 1])


def sample_wiener_increment(spec: WienerSpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    return sample_wiener_block(spec, dt, rng, 1)[0]


def sample_jump_block(spec: JumpSpec, dt: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """n compensated compound-Poisson increments, real, shape (n, dim)."""
    _check_dt(dt)
    counts = rng.poisson(spec.rates * dt, size=(n, spec.dim))
    if spec.amplitude_sampler is None:
        totals = counts * spec.amplitudes
        mean_amp = spec.amplitudes
    else:
        totals = np.zeros((n, spec.dim))
        for i in range(spec.dim):
            hits = np.nonzero(counts[:, i])[0]
            for r in hits:
                totals[r, i] = np.sum(spec.amplitude_sampler(rng, i, counts[r, i]))
        mean_amp = spec.amplitudes  # amplitudes double as the mean of the law
    return totals - spec.rates * mean_amp * dt


def sample_jump_increment(spec: JumpSpec, dt: float, rng: np.random.Generator) -> np.ndarray:
    return sample_jump_block(spec, dt, rng, 1)[0]


def sample_levy_block(
    wiener: WienerSpec, jump: JumpSpec, dt: float, rng: np.random.Generator, n: int
) -> NoiseIncrement:
    """Sum of the independent Wiener and jump parts: dM = dW + dJ."""
    if wiener.dim != jump.dim:
        raise NoiseError("Wiener and jump specs must share the mode dimension")
    dw = sample_wiener_block(wiener, dt, rng, n)
    dj = sample_jump_block(jump, dt, rng, n)
    return NoiseIncrement(dW=dw, dJ=dj.astype(complex), dt=dt)

def sample_levy_increment(
    wiener: WienerSpec, jump: JumpSpec, dt: float, rng: np.random.Generator
) -> NoiseIncrement:
    block = sample_levy_block(wiener, jump, dt, rng, 1)
    return NoiseIncrement(dW=block.dW[0], dJ=block.dJ[0], dt=dt)
