"""Immersed isogeometric Poisson solver: THB-splines + shifted boundary method."""

from .config import RunConfig, load_config, parse_config, serialize_config
from .geometry import (
    BoxOuter,
    CircleBoundary,
    PolylineBoundary,
    TrueDomain,
    build_surrogate,
    classify_elements,
)
from .sbm import (
    Assembler,
    AssembledSystem,
    NitscheConfig,
    ShiftConfig,
    assemble,
    mark_surrogate_functions,
    shift_gradient_enhanced,
    shift_gradient_standard,
    shift_value_enhanced,
    shift_value_standard,
)
from .solutions import SOLUTIONS, ManufacturedSolution, get_solution
from .solver import (
    StudyRecord,
    compute_errors,
    fit_slope,
    run_single,
    run_study,
    schedule_spans,
    solve,
    write_csv,
)
from .splines import (
    KnotVector,
    LocalBasisFunction,
    TwoScaleMap,
    eval_basis,
    eval_derivatives,
    h_refine,
    p_refine,
    tensor_two_scale,
    two_scale_coeffs,
    two_scale_matrix,
    uniform_open_knots,
)
from .thb import Element, HierarchicalSpace, Level

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
