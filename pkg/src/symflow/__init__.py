"""Verification of symmetries and conservation rules of dynamical systems.

Systems are ``du/dt = f(u, t)`` with right-hand sides written in a small
expression language; every check evaluates exact derivatives (forward-mode
automatic differentiation) at seeded sample points or along integrated
trajectories.
"""

from symflow.conserved import (
    ConservationReport,
    check_constant_pointwise,
    check_cross_orthogonality,
    check_drift,
    check_integrating_factor,
    check_liouville_field,
    levi_civita_contract,
    liouville_field,
    liouville_from_constants,
    ovsjannikov_construct,
)
from symflow.coords import (
    AdaptedChart,
    ReducedStructureReport,
    check_reduced_structure,
    flow_along_symmetry,
    map_trajectory_to_chart,
    verify_chart,
)
from symflow.dynsys import (
    DynamicalSystem,
    LambdaSpec,
    VectorField,
    build_gamma_family,
    build_scaling_family,
    divergence,
    evolutionary_form,
    lie_bracket,
    total_derivative,
)
from symflow.errors import *  # noqa: F401,F403
from symflow.expr import Expr, Point, parse
from symflow.hamiltonian import (
    DeviationSeries,
    HamiltonianSystem,
    check_deviation_capital_lambda,
    check_deviation_lambda,
    check_gradient_identity,
    check_generator_conserved,
    field_from_generating,
    ham_vector_field,
    poisson_bracket,
    symplectic_matrix,
    track_generating_function,
)
from symflow.numint import IntegratorConfig, Trajectory, flow_map, integrate
from symflow.sampling import CheckReport, Sampler
from symflow.symmetry import (
    check_capital_lambda,
    check_lambda,
    check_standard,
    estimate_lambda,
    exponential_lift,
)
from symflow.system_file import SystemSpec, load

__version__ = "0.1.0"
