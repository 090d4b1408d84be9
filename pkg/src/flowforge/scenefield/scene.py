"""Scene files: camera defaults plus primitive and splat representations.

A scene may carry analytic primitives (used by the "analytic" oracle
backend and the "nerf_density" backend) and/or a splat list (used by the
"splats" backend). Presets build matched representations of the same
geometry so backends can be compared on equal scenes.

Scene JSON is either explicit:

    {"id": ..., "camera": {"intrinsics": ..., "pose": ...},
     "sampling": {"near": ..., "far": ..., "steps": ...},
     "primitives": [...], "splats": [...]}

or a preset reference: {"preset": "wall_floaters", "seed": 3, ...params}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfigError
from ..geometry import CameraIntrinsics, RigidPose, rotation_about_axis
from .nerf import NerfSampling
from .primitives import (
    Albedo,
    AnalyticPrimitive,
    Box,
    DensityProfile,
    Plane,
    Sphere,
    SplatPrimitive,
    primitive_from_json,
    primitive_to_json,
)

__all__ = ["Scene", "make_preset", "load_scene", "save_scene", "PRESETS"]

BACKENDS = ("analytic", "nerf_density", "splats")

_DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=150.0, fy=150.0, cx=79.5, cy=63.5, width=160, height=128
)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    intrinsics: CameraIntrinsics
    base_pose: RigidPose
    sampling: NerfSampling
    primitives: tuple = ()
    splats: tuple = ()

    def require_backend(self, backend: str) -> None:
        if backend not in BACKENDS:
            raise InvalidConfigError(f"unknown backend {backend!r}")
        if backend in ("analytic", "nerf_density") and not self.primitives:
            raise InvalidConfigError(f"scene {self.scene_id!r} has no primitives")
        if backend == "splats" and not self.splats:
            raise InvalidConfigError(f"scene {self.scene_id!r} has no splats")

    def to_json(self) -> dict:
        return {
            "id": self.scene_id,
            "camera": {
                "intrinsics": self.intrinsics.to_json(),
                "pose": self.base_pose.to_json(),
            },
            "sampling": self.sampling.to_json(),
            "primitives": [primitive_to_json(p) for p in self.primitives],
            "splats": [s.to_json() for s in self.splats],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Scene":
        try:
            cam = obj["camera"]
            return cls(
                scene_id=str(obj.get("id", "scene")),
                intrinsics=CameraIntrinsics.from_json(cam["intrinsics"]),
                base_pose=RigidPose.from_json(cam["pose"]),
                sampling=NerfSampling.from_json(obj["sampling"]),
                primitives=tuple(
                    primitive_from_json(p) for p in obj.get("primitives", [])
                ),
                splats=tuple(SplatPrimitive.from_json(s) for s in obj.get("splats", [])),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidConfigError(f"malformed scene JSON: {exc}") from exc


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if "preset" in obj:
        params = {k: v for k, v in obj.items() if k != "preset"}
        return make_preset(obj["preset"], **params)
    return Scene.from_json(obj)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scene.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Preset construction helpers


def _checker(scale=0.8, a=(0.85, 0.82, 0.75), b=(0.15, 0.2, 0.3)) -> Albedo:
    return Albedo(kind="checkerboard", scale=scale, color_a=a, color_b=b)


def _surface(sigma=60.0, thickness=0.4) -> DensityProfile:
    return DensityProfile(mode="surface", sigma=sigma, thickness=thickness)


def _quat_about_y(angle: float) -> tuple[float, float, float, float]:
    return (float(np.cos(angle / 2)), 0.0, float(np.sin(angle / 2)), 0.0)


def _wall_splats(
    z: float,
    half_w: float,
    half_h: float,
    spacing: float,
    albedo: Albedo,
    rng: np.random.Generator,
    tilt_y: float = 0.0,
    opacity: float = 0.7,
    jitter: float = 0.0,
) -> list[SplatPrimitive]:
    """Grid of disc splats covering a (possibly y-tilted) wall."""
    xs = np.arange(-half_w, half_w + spacing / 2, spacing)
    ys = np.arange(-half_h, half_h + spacing / 2, spacing)
    rot = rotation_about_axis(np.array([0.0, 1.0, 0.0]), tilt_y)
    quat = _quat_about_y(tilt_y)
    out = []
    scale = (0.8 * spacing, 0.8 * spacing, 0.12 * spacing)
    for gx in xs:
        for gy in ys:
            local = np.array([gx, gy, 0.0])
            if jitter > 0:
                local = local + rng.normal(scale=jitter, size=3) * np.array([1, 1, 0.2])
            p = rot @ local + np.array([0.0, 0.0, z])
            color = tuple(albedo.rgb(p).tolist())
            out.append(SplatPrimitive(tuple(p), scale, quat, opacity, color))
    return out


def _sphere_splats(
    center,
    radius: float,
    spacing: float,
    albedo: Albedo,
    opacity: float = 0.7,
) -> list[SplatPrimitive]:
    """Fibonacci-lattice disc splats tangent to a sphere surface."""
    n = max(int(4 * np.pi * radius * radius / (spacing * spacing)), 16)
    i = np.arange(n)
    phi = np.arccos(1 - 2 * (i + 0.5) / n)
    theta = np.pi * (1 + 5**0.5) * i
    normals = np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=-1
    )
    center = np.asarray(center, dtype=np.float64)
    out = []
    scale = (0.9 * spacing, 0.9 * spacing, 0.12 * spacing)
    for nrm in normals:
        p = center + radius * nrm
        # Quaternion rotating +z onto the surface normal.
        z_axis = np.array([0.0, 0.0, 1.0])
        w = 1.0 + float(nrm @ z_axis)
        if w < 1e-9:
            quat = (0.0, 1.0, 0.0, 0.0)
        else:
            axis = np.cross(z_axis, nrm)
            quat = np.array([w, axis[0], axis[1], axis[2]])
            quat = tuple((quat / np.linalg.norm(quat)).tolist())
        color = tuple(albedo.rgb(p).tolist())
        out.append(SplatPrimitive(tuple(p), scale, quat, opacity, color))
    return out


def _floater_splats(
    count: int, rng: np.random.Generator, z_range=(1.6, 4.0), opacity: float = 0.18
) -> list[SplatPrimitive]:
    out = []
    for _ in range(count):
        p = (
            float(rng.uniform(-1.6, 1.6)),
            float(rng.uniform(-1.3, 1.3)),
            float(rng.uniform(*z_range)),
        )
        s = float(rng.uniform(0.04, 0.10))
        color = tuple(float(c) for c in rng.uniform(0.2, 0.9, size=3))
        out.append(SplatPrimitive(p, (s, s, s), (1.0, 0.0, 0.0, 0.0), opacity, color))
    return out


def _floater_spheres(
    count: int,
    rng: np.random.Generator,
    z_range=(1.6, 4.0),
    absorb: float = 0.18,
    r_range=(0.04, 0.10),
) -> list[Sphere]:
    out = []
    for _ in range(count):
        c = (
            float(rng.uniform(-1.6, 1.6)),
            float(rng.uniform(-1.3, 1.3)),
            float(rng.uniform(*z_range)),
        )
        r = float(rng.uniform(*r_range))
        # Volume sigma chosen so a central ray absorbs roughly `absorb`.
        sigma = -np.log(1.0 - absorb) / (2 * r)
        color = tuple(float(x) for x in rng.uniform(0.2, 0.9, size=3))
        out.append(
            Sphere(
                c,
                r,
                albedo=Albedo(kind="constant", color_a=color),
                density=DensityProfile(mode="volume", sigma=float(sigma), thickness=r),
            )
        )
    return out


def _back_wall(z: float, albedo: Albedo, sigma=60.0, thickness=0.4) -> Plane:
    # Solid half-space z >= z0, seen from the origin looking +z.
    return Plane(
        normal=(0.0, 0.0, -1.0),
        offset=-z,
        albedo=albedo,
        density=_surface(sigma, thickness),
    )


def _preset_wall(seed: int = 0, tilt_y: float = 0.12, **_: object) -> Scene:
    rng = np.random.default_rng(seed)
    albedo = _checker(scale=0.7)
    wall_z = 5.0
    rot = rotation_about_axis(np.array([0.0, 1.0, 0.0]), tilt_y)
    normal = tuple((rot @ np.array([0.0, 0.0, -1.0])).tolist())
    offset = float(np.array(normal) @ np.array([0.0, 0.0, wall_z]))
    prims = (Plane(normal, offset, albedo, _surface()),)
    splats = _wall_splats(wall_z, 3.2, 2.4, 0.13, albedo, rng, tilt_y=tilt_y)
    return Scene(
        scene_id=f"wall-{seed}",
        intrinsics=_DEFAULT_INTRINSICS,
        base_pose=RigidPose.identity(),
        sampling=NerfSampling(near=0.8, far=8.0, steps=160),
        primitives=prims,
        splats=tuple(splats),
    )


def _preset_wall_floaters(
    seed: int = 0, floater_fraction: float = 0.1, tilt_y: float = 0.12, **_: object
) -> Scene:
    base = _preset_wall(seed=seed, tilt_y=tilt_y)
    rng = np.random.default_rng((seed, 77))
    n_float = max(int(len(base.splats) * floater_fraction), 1)
    splats = tuple(list(base.splats) + _floater_splats(n_float, rng))
    rng2 = np.random.default_rng((seed, 78))
    prims = tuple(list(base.primitives) + _floater_spheres(max(n_float // 12, 2), rng2))
    return Scene(
        scene_id=f"wall-floaters-{seed}",
        intrinsics=base.intrinsics,
        base_pose=base.base_pose,
        sampling=base.sampling,
        primitives=prims,
        splats=splats,
    )


def _preset_two_planes(seed: int = 0, **_: object) -> Scene:
    albedo_back = _checker(scale=0.8)
    albedo_front = _checker(scale=0.35, a=(0.9, 0.45, 0.2), b=(0.25, 0.1, 0.45))
    back = _back_wall(6.0, albedo_back)
    front = Box(
        lo=(-1.7, -1.3, 2.2),
        hi=(0.25, 1.3, 2.45),
        albedo=albedo_front,
        density=_surface(sigma=150.0, thickness=0.12),
    )
    return Scene(
        scene_id=f"two-planes-{seed}",
        intrinsics=_DEFAULT_INTRINSICS,
        base_pose=RigidPose.identity(),
        sampling=NerfSampling(near=0.8, far=8.0, steps=180),
        primitives=(back, front),
    )


def _preset_fog_wall(seed: int = 0, fog_sigma: float = 0.5, **_: object) -> Scene:
    wall = _back_wall(5.0, _checker(scale=0.6))
    fog = Box(
        lo=(0.05, -2.2, 1.1),
        hi=(3.4, 2.2, 4.6),
        albedo=Albedo(kind="constant", color_a=(0.5, 0.55, 0.6)),
        density=DensityProfile(mode="volume", sigma=fog_sigma, thickness=0.1),
    )
    return Scene(
        scene_id=f"fog-wall-{seed}",
        intrinsics=_DEFAULT_INTRINSICS,
        base_pose=RigidPose.identity(),
        sampling=NerfSampling(near=0.7, far=7.0, steps=160),
        primitives=(wall, fog),
    )


def _preset_oracle(seed: int = 0, **_: object) -> Scene:
    """Mixed solid scenes for label-correctness checks, varied by seed."""
    rng = np.random.default_rng((seed, 101))
    prims: list[AnalyticPrimitive] = [_back_wall(6.5 + rng.uniform(-0.5, 0.5), _checker())]
    n_spheres = 1 + seed % 2
    for _ in range(n_spheres):
        c = (
            float(rng.uniform(-1.0, 1.0)),
            float(rng.uniform(-0.7, 0.7)),
            float(rng.uniform(3.4, 5.0)),
        )
        r = float(rng.uniform(0.5, 0.9))
        prims.append(
            Sphere(c, r, _checker(scale=0.4, a=(0.9, 0.6, 0.3), b=(0.2, 0.3, 0.6)), _surface())
        )
    if seed % 2 == 1:
        x0 = float(rng.uniform(-1.6, 0.4))
        prims.append(
            Box(
                lo=(x0, -1.1, 2.6),
                hi=(x0 + 1.0, 0.2, 2.9),
                albedo=_checker(scale=0.3, a=(0.4, 0.85, 0.5), b=(0.1, 0.25, 0.15)),
                density=_surface(sigma=150.0, thickness=0.15),
            )
        )
    return Scene(
        scene_id=f"oracle-{seed}",
        intrinsics=_DEFAULT_INTRINSICS,
        base_pose=RigidPose.identity(),
        sampling=NerfSampling(near=0.8, far=8.5, steps=192),
        primitives=tuple(prims),
    )


def _preset_sphere_wall(
    seed: int = 0,
    floater_fraction: float = 0.0,
    diffuse: bool = False,
    **_: object,
) -> Scene:
    """Wall + sphere in both representations.

    diffuse=True gives the density representation the character of a
    learned field: soft surface shells plus extended low-density haze
    blobs, versus the splat list's compact floaters.
    """
    density_sigma = 7.0 if diffuse else 60.0
    density_thickness = 0.8 if diffuse else 0.4
    rng = np.random.default_rng((seed, 55))
    albedo_wall = _checker(scale=0.7)
    albedo_sph = _checker(scale=0.35, a=(0.85, 0.5, 0.25), b=(0.25, 0.15, 0.5))
    wall_z = 5.2
    sph_c = (0.4 + rng.uniform(-0.2, 0.2), 0.1 + rng.uniform(-0.2, 0.2), 3.6)
    sph_r = 0.75
    prims: list[AnalyticPrimitive] = [
        _back_wall(wall_z, albedo_wall, sigma=density_sigma, thickness=density_thickness),
        Sphere(
            sph_c,
            sph_r,
            albedo_sph,
            _surface(sigma=density_sigma, thickness=min(density_thickness, 0.6 * sph_r)),
        ),
    ]
    splats = _wall_splats(wall_z, 3.2, 2.4, 0.13, albedo_wall, rng)
    splats += _sphere_splats(sph_c, sph_r, 0.11, albedo_sph)
    if floater_fraction > 0:
        n_float = max(int(len(splats) * floater_fraction), 1)
        splats += _floater_splats(n_float, np.random.default_rng((seed, 56)))
        blob_r = (0.18, 0.4) if diffuse else (0.04, 0.10)
        blob_absorb = 0.35 if diffuse else 0.18
        prims += _floater_spheres(
            max(n_float // 12, 2),
            np.random.default_rng((seed, 57)),
            absorb=blob_absorb,
            r_range=blob_r,
        )
    return Scene(
        scene_id=f"sphere-wall-{seed}",
        intrinsics=_DEFAULT_INTRINSICS,
        base_pose=RigidPose.identity(),
        sampling=NerfSampling(near=0.8, far=8.0, steps=176),
        primitives=tuple(prims),
        splats=tuple(splats),
    )


PRESETS = {
    "wall": _preset_wall,
    "wall_floaters": _preset_wall_floaters,
    "two_planes": _preset_two_planes,
    "fog_wall": _preset_fog_wall,
    "oracle": _preset_oracle,
    "sphere_wall": _preset_sphere_wall,
}


def make_preset(name: str, **params) -> Scene:
    if name not in PRESETS:
        raise InvalidConfigError(
            f"unknown scene preset {name!r}; available: {sorted(PRESETS)}"
        )
    return PRESETS[name](**params)
