"""Stochastic finite-temperature Hartree solver on periodic grids.

Mirror descent over fermionic density matrices with a single-shot randomized
density estimator; the core primitive is a pole-expansion matvec by the
square-root Fermi-Dirac function of the effective Hamiltonian.
"""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    GridSpec,
    FourierMultiplier,
    ExternalPotential,
    make_grid,
    kinetic_multiplier,
    yukawa_multiplier,
    apply_multiplier,
    background_potential,
    interaction_row_norm,
)
from .matfun import (  # noqa: F401
    EffectiveHamiltonian,
    PoleExpansion,
    SolverConfig,
    eval_h,
    eval_g,
    eval_gtilde,
    build_contour,
    contour_matvec,
    solve_shifted,
    chebyshev_matvec,
    dense_matrix_function,
)
from .mirror import (  # noqa: F401
    MDState,
    GradientSample,
    ScheduleConfig,
    init_state,
    sample_gradient,
    md_update,
    step_size,
    estimate_objective,
    run,
)
from .scf import SCFResult, dense_scf, gold_standard_density  # noqa: F401
from .chempot import MuScan, mu_bracket, mu_scan  # noqa: F401
