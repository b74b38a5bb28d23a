"""Sparse inverse scattering by linear and nonlinear iterative hard thresholding."""
from .errors import (
    ConfigError, DegenerateBoundError, DivergenceError, InvalidArgumentError,
    PreconditionError, ScatterError, SingularityError, SingularOperatorError,
    UndefinedCoherenceError,
)
from .geometry import (
    FULL_SPHERE, HEMISPHERE, WAVENUMBER, DirectionSet, VoxelGrid, build_grid, grid_for_kh,
    sphere_directions,
)
from .forward import (
    INF_ORDER, GreenMatrix, MeasurementMatrix, PotentialField, add_noise, assemble_V,
    assemble_operators, forward_born, forward_full, green, t_matrix,
)
from .iht import (
    IHTConfig, ReconstructionTrace, column_normalize, diag_extract, hard_threshold,
    linear_iht, nonlinear_iht, phi_norm_sq, reconstruct, tmatrix_iht, y_err,
)
from .coherence import (
    CoherenceReport, coherence_factored, farfield_coherence_analytic,
    linearized_coherence_numeric, mutual_coherence, perturbation_coherence_bound,
    product_coherence_bound, single_scatterer_coherence,
)
from .bounds import (
    BoundInputs, BoundTrace, full_nonlinear_bound, generic_bound, linear_bound,
    rip_constants, second_born_bound,
)

__version__ = "0.1.0"
