"""Evaluation and analytic differentiation of NURBS curves and surfaces."""

from .autodiff import (
    EvalTape,
    GridBasis,
    ParamGradients,
    SparseJacobian,
    assemble_sparse_jacobian,
    backward_grid,
    forward_batch,
    forward_grid,
    grid_basis,
)
from .basis import (
    KnotVector,
    basis_function_derivatives,
    basis_functions,
    basis_table,
    find_span,
)
from .geometry import (
    NurbsCurve,
    NurbsSurface,
    ParamGrid,
    TapeEntry,
    eval_surface_point,
    grid_normals,
    grid_partials,
    surface_normal,
    surface_partials,
)
