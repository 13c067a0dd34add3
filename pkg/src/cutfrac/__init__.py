"""Cut finite element solver for convection on fractured planar domains.

A fractured domain is a collection of bulk polygons, crack polylines between
them and bifurcation points where cracks meet.  Each component carries its
own P1 space on the triangles of a structured background mesh it cuts, and
the components are coupled weakly through upwind interface terms.
"""
from .domain import (
    Analytic,
    BulkComponent,
    ComponentId,
    CrackComponent,
    FieldSpec,
    FracturedDomain,
    PointComponent,
    coercivity_indicator,
    verify_partial_integration,
)
from .errors import (
    AdjacencyError,
    AssemblyError,
    CutFracError,
    DomainError,
    FieldError,
    GeometryError,
    ParameterError,
    SolverError,
)
from .fem import (
    AssembledSystem,
    DofMap,
    SolutionField,
    assemble,
    build_dof_map,
    discretize,
    eval_basis,
    residual_L,
    solve,
    solve_domain,
)
from .mesh import (
    ActiveMesh,
    BackgroundMesh,
    build_background_mesh,
    build_cut_mesh,
    clip_polygon_triangle,
    clip_segment_triangle,
    extract_active_mesh,
)
from .post import (
    ErrorReport,
    convergence_rates,
    energy_error,
    exact_solution,
    export_csv,
    export_vtk,
    l2_error,
    point_balance,
)
from .presets import load_preset

__version__ = "0.1.0"

__all__ = [
    "ActiveMesh", "AdjacencyError", "Analytic", "AssembledSystem", "AssemblyError",
    "BackgroundMesh", "BulkComponent", "ComponentId", "CrackComponent", "CutFracError",
    "DofMap", "DomainError", "ErrorReport", "FieldError", "FieldSpec", "FracturedDomain",
    "GeometryError", "ParameterError", "PointComponent", "SolutionField", "SolverError",
    "assemble", "build_background_mesh", "build_cut_mesh", "build_dof_map",
    "clip_polygon_triangle", "clip_segment_triangle", "coercivity_indicator",
    "convergence_rates", "discretize", "energy_error", "eval_basis", "exact_solution",
    "export_csv", "export_vtk", "extract_active_mesh", "l2_error", "load_preset",
    "point_balance", "residual_L", "solve", "solve_domain", "verify_partial_integration",
]
