"""Spectral simulation and state estimation for stochastic wave equations."""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    FieldState,
    LinearizedOperator,
    ModelKind,
    ModelSpec,
    SpectralBasis,
    apply_free_propagator,
    build_basis,
    eval_jacobian,
    eval_nonlinearity,
    sobolev_norm,
)
from .noise import (  # noqa: F401
    JumpSpec,
    NoiseIncrement,
    NoiseSpec,
    RngStreams,
    WienerSpec,
    sample_jump_increment,
    sample_levy_increment,
    sample_wiener_increment,
)
from .integrator import PathConfig, SignalModel, Trajectory, simulate_path, step_mild  # noqa: F401
from .observation import (  # noqa: F401
    ObservationOperator,
    ObservationRecord,
    likelihood_log_increment_ito,
    likelihood_log_increment_wn,
    linear_observation,
    observe_ito,
    observe_whitenoise,
)
from .particle import (  # noqa: F401
    MomentFunctional,
    ParticleCloud,
    error_covariance_mc,
    innovation_path,
    pf_moment,
    pf_normalize,
    pf_propagate,
    pf_resample,
    pf_update_ito,
    pf_update_whitenoise,
)
from .kalman import (  # noqa: F401
    ChandrasekharState,
    KalmanState,
    RiccatiState,
    chandrasekhar_integrate,
    forcing_matrix,
    kalman_step_ito,
    kalman_step_whitenoise,
    pdot0,
    riccati_integrate,
    riccati_rhs,
)
