"""Synthetic multi-view crowd dataset tooling.

Seeded scene synthesis with calibrated camera rings, ground-truth
annotation (density maps, occupancy grids, per-view dots), multi-view
fusion onto the ground plane, an unbalanced entropic transport loss for
point localization, and the matching/counting metrics to evaluate it all.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateProjection,
    DuplicateId,
    ForgeError,
    FormatError,
    InvalidProblem,
    InvalidRing,
    PlacementInfeasible,
    RayParallelToPlane,
    ShapeMismatch,
    UndefinedMetric,
)
from .geometry import (
    Camera,
    GroundGrid,
    ImagePoint,
    WorldPoint,
    backproject_at_height,
    default_camera_rig,
    grid_index,
    intrinsics_from_fov,
    is_visible,
    place_camera_ring,
    project,
)
from .scene_synth import (
    AreaPartition,
    EnvironmentSample,
    FrameRecord,
    GeneratorConfig,
    PersonRecord,
    Scene,
    TimePart,
    Weather,
    generate_dataset,
    generate_frame,
    merge_areas,
    partition_frame,
    place_people,
    sample_environment,
)
from .annotate import (
    DatasetManifest,
    GridMap,
    MapKind,
    ViewAnnotation,
    annotate_views,
    read_dataset,
    read_dots,
    read_map,
    render_density_map,
    render_ground_occupancy,
    write_dataset,
    write_dots,
    write_map,
)
from .fusion import ViewMapStack, fuse_max, ground_pipeline, project_to_ground, spatial_select
from .metrics import (
    CountingStats,
    MatchReport,
    counting_stats,
    evaluate_localization,
    match_points,
    moda,
    modp,
    precision_recall_f1,
)
from .ot import (
    CostKind,
    OtProblem,
    OtSolution,
    build_cost,
    evaluate_objective,
    localization_loss,
    solve,
)
