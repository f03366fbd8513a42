"""Quasiperiodic Schroedinger operators, Aubry duality and ballistic transport on finite windows."""

__version__ = "0.1.0"

from .lattice import (
    GOLDEN_MEAN,
    FrequencyVector,
    InvalidPotentialError,
    TrigPotential,
    Window,
    Window1D,
    WindowedOperator,
    apply_current,
    build_dual_hamiltonian,
    build_hamiltonian,
    convolve,
    current_matrix,
    dual_current_diagonal,
    evaluate_potential,
)
from .frequency import (
    ContinuedFraction,
    DiophantineCertificate,
    PrecisionExhaustedError,
    beta_estimate,
    continued_fraction,
    diophantine_check,
    liouville_quotients,
)
from .evolution import (
    CesaroVelocity,
    DegenerateSpectrumWarning,
    EigenSystem,
    EigensolverError,
    asymptotic_diagonal,
    cesaro_velocity,
    diagonalize,
    position_moment,
    propagate,
    window_for_horizon,
)
from .duality import (
    FiberedFunction,
    MarginError,
    ShearPhases,
    duality_transform,
    inverse_duality_transform,
    l21_dual_norm,
    verify_duality,
)
from .transport import (
    ballistic_scan,
    dual_velocity,
    edl_kernel,
    pullback_velocity,
    tail_bound_scan,
    theta_ensemble,
)

__all__ = [
    "__version__",
    "GOLDEN_MEAN",
    "FrequencyVector",
    "InvalidPotentialError",
    "TrigPotential",
    "Window",
    "Window1D",
    "WindowedOperator",
    "apply_current",
    "build_dual_hamiltonian",
    "build_hamiltonian",
    "convolve",
    "current_matrix",
    "dual_current_diagonal",
    "evaluate_potential",
    "ContinuedFraction",
    "DiophantineCertificate",
    "PrecisionExhaustedError",
    "beta_estimate",
    "continued_fraction",
    "diophantine_check",
    "liouville_quotients",
    "CesaroVelocity",
    "DegenerateSpectrumWarning",
    "EigenSystem",
    "EigensolverError",
    "asymptotic_diagonal",
    "cesaro_velocity",
    "diagonalize",
    "position_moment",
    "propagate",
    "window_for_horizon",
    "FiberedFunction",
    "MarginError",
    "ShearPhases",
    "duality_transform",
    "inverse_duality_transform",
    "l21_dual_norm",
    "verify_duality",
    "ballistic_scan",
    "dual_velocity",
    "edl_kernel",
    "pullback_velocity",
    "tail_bound_scan",
    "theta_ensemble",
]
