import numpy as np
import pytest

from wavefilter.spectral import FieldState, ModelKind, ModelSpec, build_basis


def nls_spec(modes=4, length=2 * np.pi, **kw):
    return ModelSpec(kind=ModelKind.PARAXIAL_NLS, modes_per_dim=modes, domain_length=length, **kw)


def kg_spec(modes=4, k0=1.0, **kw):
    return ModelSpec(kind=ModelKind.KLEIN_GORDON, modes_per_dim=modes, k0=k0, **kw)


def sg_spec(modes=4, k0=0.5, g=1.0, **kw):
    return ModelSpec(kind=ModelKind.SINE_GORDON, modes_per_dim=modes, k0=k0, g=g, **kw)


def random_state(rng, basis, spec, scale=1.0, real_field=False):
    """Random FieldState; real_field draws a real collocation-grid field."""
    m = basis.n_modes
    if real_field:
        from wavefilter.spectral import to_spectral

        grid = scale * rng.standard_normal(m)
        primary = to_spectral(grid.astype(complex), basis)
        secondary = to_spectral(scale * rng.standard_normal(m).astype(complex), basis) if spec.second_order else None
    else:
        primary = scale * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
        secondary = (
            scale * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
            if spec.second_order
            else None
        )
    return FieldState(primary=primary, secondary=secondary)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
