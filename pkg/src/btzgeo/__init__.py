"""Certified flat spacetimes from punctured-surface holonomy.

The pipeline: validate an affine representation (``representations``),
build a certified polyhedral spacetime over an ideal triangulation
(``builder``), attach or strip extreme-BTZ fibers and spacelike caps
(``builder``, ``surgery``), and probe the causal structure with traced
curves (``causality``).  ``cli`` wires the stages into a command line tool.
"""

from .minkowski import (
    CausalClass,
    CausalOrder,
    GeometryError,
    AffineIsometry,
    IsometryKind,
    LinearIsometry,
    MinkowskiVector,
    boost_x,
    causal_class,
    causal_relation,
    classify_isometry,
    fixed_lightlike_direction,
    minkowski_inner,
    quadratic_form,
    rotation_about_t,
)
from .models import (
    ModelPoint,
    axis_deck_generator,
    btz_causal_relation,
    btz_point,
    dev0,
    dev0_inverse,
    h_ell,
    holonomy_around_axis,
    parabolic_parameter,
)
from .representations import (
    AffineRepresentation,
    AdmissibilityReport,
    Gluing,
    IdealTriangulationData,
    SurfaceGroupPresentation,
    builtin_examples,
    check_admissible,
    cocycle_from_tangent_vector,
    tangent_cocycle_basis,
)
from .builder import (
    BuildSettings,
    CertificationRecord,
    PolyhedralSpacetime,
    SpearDescriptor,
    build,
    export_mesh,
    extend_btz,
    find_spear,
    mesh_data,
    recheck_certification,
    strip_btz,
)
from .surgery import (
    BoundaryProfile,
    IntersectionReport,
    ModelCurve,
    SurfaceGraph,
    completeness_certificate,
    extend_compact,
    extend_complete,
    fits_spear,
    intersection_count,
)
from .causality import (
    CausalPolyline,
    ChartPoint,
    FiberPoint,
    btz_decomposition,
    cauchy_time_report,
    diamond_sample,
    trace_causal_curve,
    validate_polyline,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "AffineIsometry",
    "AffineRepresentation",
    "BoundaryProfile",
    "BuildSettings",
    "CausalClass",
    "CausalOrder",
    "CausalPolyline",
    "CertificationRecord",
    "ChartPoint",
    "FiberPoint",
    "GeometryError",
    "Gluing",
    "IdealTriangulationData",
    "IntersectionReport",
    "IsometryKind",
    "LinearIsometry",
    "MinkowskiVector",
    "ModelCurve",
    "ModelPoint",
    "PolyhedralSpacetime",
    "SpearDescriptor",
    "SurfaceGraph",
    "SurfaceGroupPresentation",
    "axis_deck_generator",
    "boost_x",
    "btz_causal_relation",
    "btz_decomposition",
    "btz_point",
    "build",
    "builtin_examples",
    "cauchy_time_report",
    "causal_class",
    "causal_relation",
    "check_admissible",
    "classify_isometry",
    "cocycle_from_tangent_vector",
    "completeness_certificate",
    "dev0",
    "dev0_inverse",
    "diamond_sample",
    "export_mesh",
    "extend_btz",
    "extend_compact",
    "extend_complete",
    "find_spear",
    "fits_spear",
    "fixed_lightlike_direction",
    "h_ell",
    "holonomy_around_axis",
    "intersection_count",
    "mesh_data",
    "minkowski_inner",
    "parabolic_parameter",
    "quadratic_form",
    "recheck_certification",
    "rotation_about_t",
    "strip_btz",
    "tangent_cocycle_basis",
    "trace_causal_curve",
    "validate_polyline",
]
