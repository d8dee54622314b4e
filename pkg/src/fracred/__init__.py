"""fracred: fracture-reduction quality metrics from segmented fragment meshes.

Fits a sphere to the articular surface, projects labeled fracture lines
onto it, and measures the 3D gap, 3D step-off and total gap area of each
fracture; also provides Chamfer-distance segmentation QC and per-fragment
rigid transformation recovery, validated against analytic synthetic cases.
"""

__version__ = "0.1.0"

from .chamfer import PointSet, chamfer_distance, directed_mean_nn, mesh_vertex_set
from .geometry import (
    Mesh,
    RigidTransform,
    Sphere,
    apply_transform,
    compose,
    geodesic_distance,
    invert,
    project_to_sphere,
)
from .metrics import (
    FractureLinePair,
    GapPatch,
    MetricParams,
    ProjectedLine,
    ReductionReport,
    UnwrappedRegion,
    case_metrics,
    gap_3d,
    gap_patch,
    project_line,
    reproject_patch,
    step_off_3d,
    total_gap_area,
    triangulate_region,
    unwrap_region,
)
from .rbf import ThinPlateSpline, rbf_fit
from .registration import (
    FragmentMatch,
    RegistrationResult,
    TrimmedICP,
    icp_rigid,
    kabsch,
    pca_init,
    recover_fragment_transforms,
)
from .spherefit import (
    LandmarkSet,
    SphereFit,
    fit_sphere,
    fit_sphere_algebraic,
    fit_sphere_geometric,
)
from .synthbench import (
    SyntheticCase,
    analytic_zone_area,
    make_band_case,
    make_displaced_case,
    make_preset,
)

__all__ = [
    "__version__",
    "Mesh",
    "RigidTransform",
    "Sphere",
    "apply_transform",
    "compose",
    "invert",
    "project_to_sphere",
    "geodesic_distance",
    "PointSet",
    "chamfer_distance",
    "directed_mean_nn",
    "mesh_vertex_set",
    "LandmarkSet",
    "SphereFit",
    "fit_sphere",
    "fit_sphere_algebraic",
    "fit_sphere_geometric",
    "ThinPlateSpline",
    "rbf_fit",
    "FractureLinePair",
    "ProjectedLine",
    "MetricParams",
    "UnwrappedRegion",
    "GapPatch",
    "ReductionReport",
    "project_line",
    "gap_3d",
    "step_off_3d",
    "unwrap_region",
    "triangulate_region",
    "reproject_patch",
    "gap_patch",
    "total_gap_area",
    "case_metrics",
    "FragmentMatch",
    "RegistrationResult",
    "TrimmedICP",
    "kabsch",
    "pca_init",
    "icp_rigid",
    "recover_fragment_transforms",
    "SyntheticCase",
    "analytic_zone_area",
    "make_band_case",
    "make_displaced_case",
    "make_preset",
]
