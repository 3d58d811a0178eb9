"""Survey planning and per-camera depth/label rendering."""
from .bvh import BVH, BVHError, build_bvh, intersect, intersect_brute, mesh_bvh, occluded
from .camera import CameraError, CameraIntrinsics, CameraPose, ground_footprint, pixel_rays, project
from .plan import (
    ALTITUDE_BAND,
    FlightPlan,
    PlanError,
    apply_wind_jitter,
    coverage_counts,
    footprint_size,
    footprints,
    measured_overlaps,
    plan_crosshatch,
    read_plan,
    write_plan,
)
from .render import DepthLabelImage, ImageFormatError, read_image, render, write_image
