"""Reconstruction-like point clouds: labeled proxies from depth maps and the MVS stand-in."""
from .proxy import backproject_proxy
from .simulate import (
    NoiseParams,
    ReconError,
    camera_bounds,
    inside_closed_mesh,
    sample_uniform_volume,
    simulate_reconstruction,
    view_counts,
)
