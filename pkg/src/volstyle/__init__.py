"""Editable neural radiance fields for volume-rendered scenes.

Three optimization stages build on each other: a base field fixes the scene
geometry, a palette color network decomposes appearance into a small set of
editable palette colors, and a distilled unrestricted color network lifts the
palette constraint so individual regions can take on arbitrary image styles.
"""

__version__ = "0.1.0"

from .cameras import Camera, Rays, generate_rays, sphere_cameras, orbit_camera
from .compositing import CompositeTrace, composite
from .fields import FieldSnapshot, ModelConfig, RadianceField
from .hashgrid import HashGrid, HashGridConfig
from .sampling import SampleBatch, sample_along_ray
from .sh import sh_encode

__all__ = [
    "Camera",
    "CompositeTrace",
    "FieldSnapshot",
    "HashGrid",
    "HashGridConfig",
    "ModelConfig",
    "RadianceField",
    "Rays",
    "SampleBatch",
    "composite",
    "generate_rays",
    "orbit_camera",
    "sample_along_ray",
    "sh_encode",
    "sphere_cameras",
]
