"""Differentiable NURBS curves and surfaces.

Forward evaluation on parameter grids, analytic gradients with respect to
control points and weights, gradient-descent fitting to point clouds, and
surface offsetting for multi-patch assemblies.
"""

__version__ = "0.1.0"

from .core import (
    KnotVector,
    NurbsCurve,
    NurbsSurface,
    ParamGrid,
    assemble_sparse_jacobian,
    backward_grid,
    eval_surface_point,
    forward_grid,
    surface_normal,
)
from .core.kernels import available_backends, backend, set_backend, set_num_threads
from .errors import (
    AmbiguousEdgeError,
    ContractError,
    DomainError,
    EvaluationError,
    FitAbortedError,
    FoldError,
    NurbsError,
    ParseError,
    PoisonedGradientError,
    SingularNormalError,
    SingularWeightError,
    UnsupportedStrategyError,
    ValidationError,
)
from .fit import FitConfig, FitReport, fit_curve, fit_surface, pointwise_error_map
from .losses import PointCloud, chamfer_mean, chamfer_normalized, curve_length_reg, loss_chamfer, loss_l1, loss_l2, loss_mse
from .offset import (
    OffsetJob,
    PatchAssembly,
    consolidated_normals,
    cp_offset_baseline,
    detect_shared_edges,
    fit_offset_surfaces,
    offset_point_cloud,
)
from .optim import OptimizerState, apply_shared_edge_constraint, clamp_weights, step
