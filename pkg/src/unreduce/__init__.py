"""Un-reduction of second-order differential equation fields on principal bundles.

Given a SODE on the quotient ``M/G`` of a principal bundle with a connection,
the package builds SODEs on the total space ``M`` whose base integral curves
project onto those of the quotient SODE, integrates them in quasi-velocity
form and checks the defining properties numerically.
"""

from .bundle import (
    BundleChart,
    QuasiState,
    ad_invariance_check,
    coords_to_quasi,
    fd_bracket,
    frame_condition,
    quasi_to_coords,
    verify_curvature,
    verify_vertical_brackets,
)
from .errors import (
    CapabilityError,
    ConditioningError,
    DomainError,
    GridMismatchError,
    NonFiniteError,
    UnknownSystemError,
    UnreductionError,
    ValidationError,
)
from .groups import GroupModel, MatrixRealization, abelian, gl, positive_reals, rodrigues, sl, so3
from .integrate import (
    FiberCurve,
    Trajectory,
    horizontal_lift_ic,
    integrate,
    project_trajectory,
    reconstruct_fiber,
    trajectory_error,
    write_trajectory,
)
from .sode import (
    BaseSODE,
    LagrangianData,
    RawField,
    TotalSODE,
    base_sode_from_lagrangian,
    eval_sode,
    gamma2,
    gamma3,
    lagrangian_residual,
    primary_unreduction,
    sode_condition_check,
    submersive_check,
    vilms_horizontal_lift,
    x_omega,
)
from .systems import (
    SYSTEM_IDS,
    SystemBundle,
    curvature_distortion,
    get_system,
    make_canonical_spray,
    make_flat_product,
    make_glplus,
    make_so3_sphere,
    make_wong_so3,
)
from .verify import CheckReport, run_all

__version__ = "0.1.0"

__all__ = [
    "CheckReport",
    "GroupModel",
    "MatrixRealization",
    "abelian",
    "gl",
    "positive_reals",
    "rodrigues",
    "run_all",
    "sl",
    "so3",
    "BundleChart",
    "QuasiState",
    "ad_invariance_check",
    "coords_to_quasi",
    "fd_bracket",
    "frame_condition",
    "quasi_to_coords",
    "verify_curvature",
    "verify_vertical_brackets",
    "CapabilityError",
    "ConditioningError",
    "DomainError",
    "GridMismatchError",
    "NonFiniteError",
    "UnknownSystemError",
    "UnreductionError",
    "ValidationError",
    "FiberCurve",
    "Trajectory",
    "horizontal_lift_ic",
    "integrate",
    "project_trajectory",
    "reconstruct_fiber",
    "trajectory_error",
    "write_trajectory",
    "BaseSODE",
    "LagrangianData",
    "RawField",
    "TotalSODE",
    "base_sode_from_lagrangian",
    "eval_sode",
    "gamma2",
    "gamma3",
    "lagrangian_residual",
    "primary_unreduction",
    "sode_condition_check",
    "submersive_check",
    "vilms_horizontal_lift",
    "x_omega",
    "SYSTEM_IDS",
    "SystemBundle",
    "curvature_distortion",
    "get_system",
    "make_canonical_spray",
    "make_flat_product",
    "make_glplus",
    "make_so3_sphere",
    "make_wong_so3",
]
