"""Procedural labeled 3D environments."""
from .assemble import assemble_scene, terrain_cover, terrain_mesh
from .assets import Asset, AssetCatalog, default_catalog, sphere_crown_asset
from .buildings import BuildingFootprint, FootprintError, extrude_building, extrude_buildings
from .layout import LayoutError, procedural_layout, read_geojson, write_geojson
from .mesh import LabeledMesh, MeshError, empty_mesh, read_mesh_ply, write_mesh_ply
from .placement import (
    STRATEGIES,
    PlacedObject,
    PlacementError,
    PlacementRule,
    PlacementWarning,
    RoadNetwork,
    RoadSegment,
    place_objects,
)
from .terrain import (
    HeightField,
    ParameterError,
    generate_terrain,
    read_heightfield,
    sculpt_ground_details,
    write_heightfield,
)
