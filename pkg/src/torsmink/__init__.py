"""Solver and verification lab for the discrete planar L_p torsional Minkowski problem."""
from .errors import *  # noqa: F401,F403
from .geometry import (
    ConvexPolygon,
    DiscreteMeasure,
    HausdorffResult,
    box,
    build_measure,
    clean_support_vector,
    hausdorff_distance,
    hemisphere_check,
    measure_from_angles,
    minkowski_combine,
    polygon_metrics,
    random_polygon,
    regular_measure,
    regular_polygon,
    support_function,
    wulff_shape,
)
from .mesh import TriMesh, triangulate
from .torsion import (
    TorsionData,
    TorsionField,
    facet_torsion_measure,
    lp_measure,
    mixed_rigidity,
    rigidity,
    solve_torsion,
    torsion_data,
)
from .solver import (
    SolveConfig,
    SolveReport,
    Target,
    functional_Fp,
    objective_and_gradient,
    optimality_residual,
    rescale_solution,
    solve_normalized,
    solve_original,
)

__version__ = "0.1.0"
