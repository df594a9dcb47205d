"""ags: sparse-view 3D Gaussian reconstruction with joint pose refinement.

The library reconstructs an object-centric 3D Gaussian scene from a handful
of images with imperfect camera poses. It combines a differentiable splat
renderer with pose gradients, multi-view score distillation against a
pluggable noise-prediction prior, leave-one-out outlier rejection, and
discrete render-and-compare pose correction. See README.md for a tour and
the demos/ directory for runnable walkthroughs.
"""

__version__ = "0.1.0"

from .cameras import (
    Camera,
    Intrinsics,
    RelativeCameraEncoding,
    Rotation,
    SE3Pose,
    SimilarityTransform,
    Twist,
    apply_twist,
    encode_relative_camera,
    relative_pose,
    sample_sphere_poses,
    twist_log,
    umeyama_align,
)
from .diffusion import (
    NoiseSchedule,
    OraclePriorBackend,
    PriorBackend,
    PriorQuery,
    PriorResponse,
    PriorUnavailableError,
    RemotePriorBackend,
    add_noise,
    multiview_sds_gradient,
    oracle_predict,
)
from .gaussians import Gaussian3D, GaussianScene, load_scene, save_scene
from .meshing import TriangleMesh, extract_mesh
from .metrics import (
    MetricsSummary,
    camera_center_accuracy,
    mesh_f1,
    perceptual_proxy,
    psnr,
    rotation_accuracy,
)
from .optimize import (
    FilterOutcome,
    ImageSet,
    InsufficientInliersError,
    NumericalDivergenceError,
    OutlierConfig,
    PipelineReport,
    ReconstructionConfig,
    correct_outlier_pose,
    filter_outliers,
    is_outlier,
    min_inliers_for,
    reconstruct,
    reprojection_error,
    run_pipeline,
)
from .rasterizer import (
    RenderedImage,
    RenderGradients,
    project_gaussian,
    render,
    render_with_gradients,
)
from .synthetic import CaptureManifest, generate_capture, generate_scene

__all__ = [name for name in dir() if not name.startswith("_")]
