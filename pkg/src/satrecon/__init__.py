"""satrecon: satellite photogrammetry toolkit.

Camera-model algebra and skew correction, plane-plus-parallax depth
recovery, image preprocessing (tone mapping, PAN-sharpening, AOI
extraction) and a height-map evaluation harness, exposed as a library
and a stage-per-subcommand CLI.
"""

from .camera import (
    FpcCamera,
    FpcIntrinsics,
    RpcCamera,
    RpcProjection,
    SkewDecomposition,
    decompose_skew,
    fpc_invert,
    fpc_project,
    rpc_project,
    transform_between,
)
from .depth import (
    DepthMap,
    ReparamProjection,
    build_reparam,
    depth_map_to_points,
    forward_reparam_depth,
    mean_conventional_depth,
    recover_depth,
    recover_depth_map,
    skew_correct_depth_map,
    transform_reparam,
)
from .errors import (
    AlignmentError,
    EmptyIntersectionError,
    EvaluationError,
    FileFormatError,
    NonProjectableError,
    SatreconError,
    SingularMatrixError,
)
from .evaluation import (
    EvalReport,
    GridSpec,
    HeightGrid,
    TriangleMesh,
    compute_metrics,
    fill_holes,
    poisson_disk_sample,
    rasterize_height,
    refine_alignment,
    vertex_sample,
)
from .geodesy import geodetic_to_utm, utm_central_meridian, utm_to_geodetic
from .preprocess import (
    AoiBox,
    SceneMetadata,
    aoi_to_pixel_bbox,
    filter_by_cloud_cover,
    pansharpen_brovey,
    percentile_clip,
    tonemap,
)
from .raster import (
    AffineMap2D,
    Raster,
    cubic_interpolate,
    load_raster,
    save_raster,
    warp_affine,
)

__version__ = "0.1.0"
