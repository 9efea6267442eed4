"""Experiment configuration: flat dotted-key text files.

The format is deliberately diff-friendly: one ``key = value`` pair per line,
``#`` comments, keys namespaced with dots (``model.kind``,
``filter.particle.n``).  Lists are comma separated; booleans are
``true``/``false``.  Unknown or malformed keys raise :class:`ConfigError`
naming the offending key, which the CLI maps to exit code 2.

The full key list is documented in the README.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .integrator import ADDITIVE, MULTIPLICATIVE, PathConfig, SignalModel
from .noise import JumpSpec, NoiseSpec, WienerSpec
from .observation import (
    ObservationOperator,
    grid_functional,
    linear_observation,
    mode_functional,
)
from .spectral import ModelKind, ModelSpec, SpectralError, build_basis


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}" if key else message)
        self.key = key


def parse_dotted(text: str) -> dict:
    """Parse ``key = value`` lines into a flat dict; duplicates are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("", f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError("", f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value.strip()
    return out


def config_hash(flat: dict) -> str:
    canon = "\n".join(f"{k}={v}" for k, v in sorted(flat.items()))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _get(flat, key, default=None):
    return flat.get(key, default)


def _parse_int(flat, key, default=None, minimum=None):
    raw = flat.get(key)
    if raw is None:
        return default
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(key, f"expected >= {minimum}, got {val}")
    return val


def _parse_float(flat, key, default=None):
    raw = flat.get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}")


def _parse_bool(flat, key, default=False):
    raw = flat.get(key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(key, f"expected true/false, got {raw!r}")


def _parse_float_list(flat, key, length, default=None):
    """Scalar values broadcast to ``length``; lists must match it."""
    raw = flat.get(key)
    if raw is None:
        return default
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    try:
        vals = np.array([float(p) for p in parts])
    except ValueError:
        raise ConfigError(key, f"expected a number list, got {raw!r}")
    if vals.shape[0] == 1:
        return np.full(length, vals[0])
    if vals.shape[0] != length:
        raise ConfigError(key, f"expected 1 or {length} values, got {vals.shape[0]}")
    return vals


def _parse_choice(flat, key, choices, default=None):
    raw = flat.get(key, default)
    if raw is None:
        return None
    if raw not in choices:
        raise ConfigError(key, f"expected one of {sorted(choices)}, got {raw!r}")
    return raw


_KNOWN_PREFIXES = (
    "model.",
    "noise.",
    "observation.",
    "path.",
    "prior.",
    "filter.",
    "output.",
)
_KNOWN_BARE = ("seed", "x0")


@dataclass
class FilterOptions:
    kind: str = "particle"  # particle | kalman | both
    particle_n: int = 1000
    ess_threshold: float = 0.5
    particle_mode: str = "ito"  # ito | whitenoise
    kalman_linearization: str = "fixed"  # fixed | self


@dataclass
class ExperimentConfig:
    """Validated experiment wiring built from a dotted-key file."""

    model: SignalModel
    noise: NoiseSpec
    observation: ObservationOperator
    obs_mode: str
    path: PathConfig
    prior_mean: np.ndarray
    prior_cov: np.ndarray  # diagonal over real coordinates
    x0: np.ndarray | None  # explicit initial coefficients, or draw from prior
    filter: FilterOptions
    seed: int
    out_dir: str | None
    output_stride: int
    flat: dict = field(repr=False, default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.flat)


def _build_model(flat) -> SignalModel:
    kind_raw = flat.get("model.kind")
    if kind_raw is None:
        raise ConfigError("model.kind", "required (ParaxialNLS | KleinGordon | SineGordon)")
    try:
        kind = ModelKind(kind_raw)
    except ValueError:
        raise ConfigError("model.kind", f"unknown model kind {kind_raw!r}")
    try:
        spec = ModelSpec(
            kind=kind,
            p=_parse_int(flat, "model.p", 3),
            sign=_parse_int(flat, "model.sign", 1),
            k0=_parse_float(flat, "model.k0", 1.0),
            g=_parse_float(flat, "model.g", 1.0),
            dimension=_parse_int(flat, "model.dimension", 1),
            modes_per_dim=_parse_int(flat, "model.modes_per_dim", 4),
            domain_length=_parse_float(flat, "model.domain_length", 2 * np.pi),
            linear=_parse_bool(flat, "model.linear", False),
            dealias=_parse_bool(flat, "model.dealias", False),
        )
    except SpectralError as exc:
        raise ConfigError("model", str(exc))
    basis = build_basis(spec)
    coupling = _parse_choice(
        flat, "noise.coupling", {MULTIPLICATIVE, ADDITIVE}, MULTIPLICATIVE
    )
    noise_dim = basis.n_modes if coupling == MULTIPLICATIVE else basis.state_dim
    b_scale = _parse_float_list(flat, "noise.b_scale", noise_dim)
    return SignalModel(spec=spec, basis=basis, coupling=coupling, b_scale=b_scale)


def _build_noise(flat, model: SignalModel) -> NoiseSpec:
    dim = model.noise_dim
    lambdas = _parse_float_list(flat, "noise.wiener.lambdas", dim, np.zeros(dim))
    rates = _parse_float_list(flat, "noise.jump.rates", dim, np.zeros(dim))
    amps = _parse_float_list(flat, "noise.jump.amplitudes", dim, np.zeros(dim))
    try:
        return NoiseSpec(wiener=WienerSpec(lambdas), jump=JumpSpec(rates=rates, amplitudes=amps))
    except Exception as exc:
        raise ConfigError("noise", str(exc))


def _build_observation(flat, model: SignalModel) -> ObservationOperator:
    raw = flat.get("observation.functionals", "")
    entries = [p.strip() for p in raw.split(",") if p.strip()]
    if not entries:
        raise ConfigError(
            "observation.functionals",
            "at least one functional is required (e.g. 'mode_re:0, mode_im:1')",
        )
    builders = {
        "mode_re": lambda i: mode_functional(model.basis, model.spec, i, "re"),
        "mode_im": lambda i: mode_functional(model.basis, model.spec, i, "im"),
        "grid_re": lambda i: grid_functional(model.basis, model.spec, i, "re"),
        "grid_im": lambda i: grid_functional(model.basis, model.spec, i, "im"),
    }
    rows, labels = [], []
    for entry in entries:
        if ":" not in entry:
            raise ConfigError("observation.functionals", f"expected kind:index, got {entry!r}")
        kind, idx_raw = entry.split(":", 1)
        kind = kind.strip()
        if kind not in builders:
            raise ConfigError(
                "observation.functionals",
                f"unknown functional kind {kind!r} (choose from {sorted(builders)})",
            )
        try:
            idx = int(idx_raw)
        except ValueError:
            raise ConfigError("observation.functionals", f"bad index in {entry!r}")
        try:
            rows.append(builders[kind](idx))
        except Exception as exc:
            raise ConfigError("observation.functionals", str(exc))
        labels.append(f"{kind}:{idx}")
    n = len(rows)
    cov_diag = _parse_float_list(flat, "observation.noise_cov", n, np.ones(n))
    try:
        return linear_observation(
            model.basis, model.spec, rows=rows, noise_cov=np.diag(cov_diag), labels=labels
        )
    except Exception as exc:
        raise ConfigError("observation.noise_cov", str(exc))


def _build_x0(flat, model: SignalModel) -> np.ndarray | None:
    raw = flat.get("x0")
    if raw is None or raw == "from_prior":
        return None
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    try:
        vals = np.array([complex(p) for p in parts])
    except ValueError:
        raise ConfigError("x0", f"expected complex literals like '0.5+0.1j', got {raw!r}")
    if vals.shape[0] != model.basis.state_dim:
        raise ConfigError(
            "x0", f"expected {model.basis.state_dim} coefficients, got {vals.shape[0]}"
        )
    return vals


def build_config(flat: dict) -> ExperimentConfig:
    for key in flat:
        if key not in _KNOWN_BARE and not any(key.startswith(p) for p in _KNOWN_PREFIXES):
            raise ConfigError(key, "unknown config key")
    model = _build_model(flat)
    noise = _build_noise(flat, model)
    observation = _build_observation(flat, model)
    obs_mode = _parse_choice(flat, "observation.mode", {"ito", "whitenoise"}, "ito")
    seed = _parse_int(flat, "seed", 0)
    try:
        path = PathConfig(
            dt=_parse_float(flat, "path.dt", 1e-3),
            t_end=_parse_float(flat, "path.t_end", 1.0),
            guard_lambda=_parse_float(flat, "path.guard_lambda", 1e6),
            guard_order=_parse_int(flat, "path.guard_order", 1),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("path", str(exc))
    real_dim = model.basis.real_dim
    prior_mean = _parse_float_list(flat, "prior.mean", real_dim, np.zeros(real_dim))
    prior_cov = _parse_float_list(flat, "prior.cov", real_dim, np.full(real_dim, 0.1))
    if np.any(prior_cov < 0):
        raise ConfigError("prior.cov", "variances must be >= 0")
    fopts = FilterOptions(
        kind=_parse_choice(flat, "filter.kind", {"particle", "kalman", "both"}, "particle"),
        particle_n=_parse_int(flat, "filter.particle.n", 1000, minimum=1),
        ess_threshold=_parse_float(flat, "filter.particle.ess_threshold", 0.5),
        particle_mode=_parse_choice(
            flat, "filter.particle.mode", {"ito", "whitenoise"}, "ito"
        ),
        kalman_linearization=_parse_choice(
            flat, "filter.kalman.linearization", {"fixed", "self"}, "fixed"
        ),
    )
    if fopts.kind in ("kalman", "both") and model.coupling != ADDITIVE:
        raise ConfigError(
            "filter.kind",
            "the linearized filter assumes additive state noise; set noise.coupling = additive",
        )
    if fopts.kind == "both" and not observation.linear:
        raise ConfigError("filter.kind", "comparison runs require linear observation functionals")
    if fopts.particle_mode != obs_mode:
        raise ConfigError(
            "filter.particle.mode",
            f"must match observation.mode ({obs_mode!r}) so the weights see the data convention they expect",
        )
    return ExperimentConfig(
        model=model,
        noise=noise,
        observation=observation,
        obs_mode=obs_mode,
        path=path,
        prior_mean=prior_mean,
        prior_cov=prior_cov,
        x0=_build_x0(flat, model),
        filter=fopts,
        seed=seed,
        out_dir=_get(flat, "output.dir"),
        output_stride=_parse_int(flat, "output.stride", 1, minimum=1),
        flat=dict(flat),
    )


def load_config(path: str, seed_override: int | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        flat = parse_dotted(fh.read())
    if seed_override is not None:
        flat["seed"] = str(int(seed_override))
    return build_config(flat)
