"""Scene backends: analytic oracle, density ray marching, splat rasterization."""

from .analytic import first_hit_depth, hit_visibility, render_analytic
from .field import (
    DepthMap,
    RaySample,
    RayWeightField,
    mean_depth,
    median_depth,
)
from .nerf import NerfSampling, render_rayfield_nerf
from .primitives import (
    Albedo,
    AnalyticPrimitive,
    Box,
    DensityProfile,
    Plane,
    SplatPrimitive,
    Sphere,
    camera_ray_directions,
)
from .scene import PRESETS, Scene, load_scene, make_preset, save_scene
from .splats import render_rayfield_splats

__all__ = [
    "Albedo",
    "AnalyticPrimitive",
    "Box",
    "DensityProfile",
    "DepthMap",
    "NerfSampling",
    "Plane",
    "PRESETS",
    "RaySample",
    "RayWeightField",
    "Scene",
    "SplatPrimitive",
    "Sphere",
    "camera_ray_directions",
    "first_hit_depth",
    "hit_visibility",
    "load_scene",
    "make_preset",
    "mean_depth",
    "median_depth",
    "render_analytic",
    "render_rayfield_nerf",
    "render_rayfield_splats",
    "save_scene",
]
