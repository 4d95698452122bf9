"""Constrained steepest-descent solver on varying cones for semilinear
elliptic problems on the unit square.

The library builds P1 finite-element discretizations, computes the negative
eigenspace of the linear part, and minimizes the energy over the range of a
peak selection (the maximizer of the energy on a cone attached to each
iterate) by steepest descent with admissible stepsizes.
"""

from .config import RunConfig, SEED_FUNCTIONS
from .cones import (IndefiniteCone, PeakResult, SystemCone, nehari_residuals,
                    peak_select, project_ray)
from .errors import (ConfigError, DegenerateRay, DomainViolation,
                     NumericFailure, SolverError, SpectralGapViolation,
                     StepsizeUnderflow)
from .fem import (Field, MeshQuadrature, SparseOperator, assemble_stiffness,
                  assemble_weighted_mass, export_field_csv,
                  integrate_nonlinearity, read_field_csv, riesz_gradient,
                  solve_spd)
from .mesh import Mesh, build_structured_mesh, export_mesh_csv, nodal_interpolate
from .mpa import (MpaConfig, MpaStep, MpaTrace, run_mpa, steepest_direction,
                  stepsize_S, stepsize_tilde)
from .problems import (IndefiniteProblem, SymmetryReport, SystemProblem,
                       count_nodal_domains, field_max, symmetry_report)
from .spectral import (SpectralBasis, lowest_eigenpairs, negative_eigenspace)

__version__ = "0.1.0"
