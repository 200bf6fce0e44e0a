"""Hybrid global-IGA / local-FEM plane-stress solver.

A 2D linear-elasticity toolbox that couples a global B-spline/NURBS model
with one or more local finite-element models through a non-invasive
fixed-point exchange built on the spline-to-Lagrange extraction bridge.
"""

from .cohesive import CohesiveLaw, CohesiveZone, build_cohesive_zone
from .elasticity import LoadCase, Material
from .errors import (
    ConfigError,
    ConformityError,
    IgafemError,
    MeshError,
    NonConvergenceError,
)
from .extraction import BridgeOperator, compose_bridge, fe_nodes, lagrange_extraction
from .mesh import (
    FEMesh,
    InterfaceTrace,
    RegionSpec,
    build_global_fe_mesh,
    extract_interface,
    generate_local_mesh,
    import_mesh,
    write_mesh,
)
from .solver import (
    CoupledProblem,
    GlobalModel,
    LocalModel,
    SolverOptions,
    build_global_model,
    build_local_model,
    run_coupling,
    solve_monolithic,
)
from .splines import (
    KnotVector,
    SplinePatch,
    eval_basis,
    eval_geometry,
    eval_nurbs_basis,
    knot_insertion_operator,
    quarter_annulus_patch,
    refine_patch,
    square_patch,
)

__version__ = "0.1.0"
