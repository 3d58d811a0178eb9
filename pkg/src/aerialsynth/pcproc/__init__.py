"""Point-cloud post-processing: downsampling, class mappings, tilers and statistics."""
from .downsample import grid_downsample, voxel_keys
from .mapping import (
    ClassMapping, ClassMappingError, instance14_to_9, map_classes, read_mapping,
    synthetic_to_real6, write_mapping,
)
from .stats import (
    DensityProfile, class_histogram, volume_density_histogram, write_density_csv,
    write_histogram_csv,
)
from .tiles import Tile, block_indices, sample_fixed_count, sample_sphere, tile_blocks, write_tiles

__all__ = [
    "grid_downsample", "voxel_keys",
    "ClassMapping", "ClassMappingError", "instance14_to_9", "map_classes", "read_mapping",
    "synthetic_to_real6", "write_mapping",
    "DensityProfile", "class_histogram", "volume_density_histogram", "write_density_csv",
    "write_histogram_csv",
    "Tile", "block_indices", "sample_fixed_count", "sample_sphere", "tile_blocks", "write_tiles",
]
