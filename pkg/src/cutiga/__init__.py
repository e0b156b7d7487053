"""Cut isogeometric discretisations with basis function removal.

Uniform tensor B-splines on a background grid that is cut by an implicitly
defined domain, Nitsche boundary conditions for Poisson and plane-strain
elasticity, and removal of basis functions with small energy on the domain.
"""
from .cut_geometry import BackgroundMesh, ImplicitDomain, LevelSetPrimitive, build_quadrature
from .discrete_space import (
    RemovalReport,
    SpacePartition,
    apply_removal,
    build_space,
    select_removal,
    select_removal_from_diagonal,
)
from .estimators import CutIGASolver, DiagonalRemovalSelector
from .exceptions import CutIGAError
from .forms import (
    AssembledSystem,
    ModelProblem,
    NitscheParams,
    assemble_elasticity_nonsym,
    assemble_poisson_nonsym,
    assemble_poisson_sym,
    energy_norm,
)
from .linalg_solve import augment_rigid_modes, condition_estimate, solve
from .spline_basis import TensorBSplineBasis, eval_bspline_1d, eval_bspline_1d_deriv
from .studies import StudyConfig, StudyRecord

__version__ = "0.1.0"
