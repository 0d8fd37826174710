"""Synthetic scene fixtures with an independent reference ray-marcher.

The fixture defines an analytic volume from signed-distance primitives, each
carrying a flat color and an opacity scalar, and renders it with a slow dense
quadrature (front-to-back alpha compositing over uniform samples). It stands
in for real captured data and doubles as the oracle that the neural rendering
path is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cameras import Camera, all_pixels, generate_rays, sphere_cameras
from .dataset import SceneDataset, quantize_like_png

REFERENCE_SAMPLES = 1024

# Mapped opacity -> density per unit length inside a primitive.
DENSITY_SCALE = 40.0


@dataclass(frozen=True)
class SpherePrimitive:
    """Solid sphere or shell, optionally cut open by a half-space.

    The cut keeps points with clip_normal . (p - center) <= clip_offset,
    which carves the classic cut-away opening used in volume visualization.
    """

    center: tuple[float, float, float]
    radius: float
    inner_radius: float = 0.0  # > 0 makes a shell
    clip_normal: tuple[float, float, float] | None = None
    clip_offset: float = 0.0

    def inside(self, points: np.ndarray) -> np.ndarray:
        offset = points - np.asarray(self.center)
        d = np.linalg.norm(offset, axis=-1)
        hit = (d <= self.radius) & (d >= self.inner_radius)
        if self.clip_normal is not None:
            n = np.asarray(self.clip_normal, dtype=np.float64)
            hit &= (offset @ n) <= self.clip_offset
        return hit

    def normals(self, points: np.ndarray) -> np.ndarray:
        offset = points - np.asarray(self.center)
        norm = np.linalg.norm(offset, axis=-1, keepdims=True)
        return offset / np.maximum(norm, 1e-12)


@dataclass(frozen=True)
class BoxPrimitive:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def inside(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def normals(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        center = (lo + hi) / 2
        rel = (points - center) / np.maximum((hi - lo) / 2, 1e-12)
        axis = np.argmax(np.abs(rel), axis=-1)
        out = np.zeros_like(points)
        out[np.arange(len(points)), axis] = np.sign(rel[np.arange(len(points)), axis])
        return out


@dataclass(frozen=True)
class FixtureRegion:
    primitive: SpherePrimitive | BoxPrimitive
    color: tuple[float, float, float]
    opacity: float  # in (0, 1]; scaled by DENSITY_SCALE into a density

    def __post_init__(self) -> None:
        if not 0.0 < self.opacity <= 1.0:
            raise ValueError("region opacity must lie in (0, 1]")


@dataclass(frozen=True)
class FixtureSpec:
    regions: tuple[FixtureRegion, ...]
    train_cameras: int = 42
    heldout_cameras: int = 12
    resolution: int = 128
    camera_radius: float = 1.4
    fov_x: float = 0.9
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shading: float = 0.0  # Lambertian headlight mix in [0, 1); 0 disables
    specular: float = 0.0  # white headlight highlight strength
    specular_power: int = 2  # highlight lobe sharpness
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.regions) < 1:
            raise ValueError("fixture needs at least one region")

    def field(self) -> "AnalyticField":
        return AnalyticField(self.regions, shading=self.shading, specular=self.specular,
                             specular_power=self.specular_power)


class AnalyticField:
    """Piecewise-constant density/color volume; first matching region wins.

    Optional headlight shading makes the appearance view-dependent the way lit
    volume renders are: emitted color is scaled by a Lambertian term and a
    white specular highlight is added, both driven by |n . view|.
    """

    def __init__(self, regions: tuple[FixtureRegion, ...], *, shading: float = 0.0,
                 specular: float = 0.0, specular_power: int = 8):
        self.regions = regions
        self.shading = shading
        self.specular = specular
        self.specular_power = specular_power

    def sample(self, points: np.ndarray,
               view_dirs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(N, 3) points (+ optional (N, 3) ray directions) -> densities, colors."""
        pts = np.asarray(points, dtype=np.float64)
        sigma = np.zeros(len(pts))
        color = np.zeros((len(pts), 3))
        unclaimed = np.ones(len(pts), dtype=bool)
        in_box = np.all((pts >= 0.0) & (pts <= 1.0), axis=-1)
        shade = (self.shading > 0 or self.specular > 0) and view_dirs is not None
        for region in self.regions:
            hit = unclaimed & in_box & region.primitive.inside(pts)
            sigma[hit] = region.opacity * DENSITY_SCALE
            color[hit] = region.color
            if shade and hit.any():
                normals = region.primitive.normals(pts[hit])
                ndotv = np.abs((normals * view_dirs[hit]).sum(axis=-1))
                lambertian = 1.0 - self.shading + self.shading * ndotv
                color[hit] = np.clip(color[hit] * lambertian[:, None]
                                     + self.specular * (ndotv ** self.specular_power)[:, None],
                                     0.0, 1.0)
            unclaimed &= ~hit
        return sigma, color

    def region_index(self, points: np.ndarray) -> np.ndarray:
        """Index of the claiming region per point, -1 for empty space."""
        pts = np.asarray(points, dtype=np.float64)
        out = np.full(len(pts), -1, dtype=np.int64)
        in_box = np.all((pts >= 0.0) & (pts <= 1.0), axis=-1)
        for i, region in enumerate(self.regions):
            hit = (out == -1) & in_box & region.primitive.inside(pts)
            out[hit] = i
        return out


def march_rays(field: AnalyticField, origins: np.ndarray, directions: np.ndarray,
               near: np.ndarray, far: np.ndarray, background: np.ndarray,
               *, n_samples: int = REFERENCE_SAMPLES,
               region: int | None = None,
               return_depth: bool = False) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Front-to-back alpha compositing with dense uniform sampling.

    This is the reference quadrature: a direct loop over sample slabs using
    per-slab opacities a = 1 - exp(-sigma * dt), independent of the
    transmittance-product formulation used by the differentiable renderer.
    Restricting to a region zeroes the density contributed by other regions.
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    near = np.broadcast_to(np.asarray(near, dtype=np.float64), (len(origins),))
    far = np.broadcast_to(np.asarray(far, dtype=np.float64), (len(origins),))

    rgb = np.zeros((len(origins), 3))
    trans = np.ones(len(origins))
    depth = np.zeros(len(origins))
    span = far - near
    dt = span / n_samples
    for k in range(n_samples):
        t = near + span * (k + 0.5) / n_samples
        points = origins + directions * t[:, None]
        sigma, color = field.sample(points, directions)
        if region is not None:
            idx = field.region_index(points)
            sigma = np.where(idx == region, sigma, 0.0)
        a = 1.0 - np.exp(-sigma * dt)
        w = trans * a
        rgb += w[:, None] * color
        depth += w * t
        trans = trans * (1.0 - a)
    rgb += trans[:, None] * np.asarray(background, dtype=np.float64)
    if return_depth:
        hit = 1.0 - trans
        with np.errstate(invalid="ignore"):
            depth = np.where(hit > 1e-6, depth / np.maximum(hit, 1e-12), np.inf)
        return rgb, depth
    return rgb


def render_reference_view(field: AnalyticField, camera: Camera, background,
                          *, n_samples: int = REFERENCE_SAMPLES,
                          region: int | None = None, chunk: int = 8192) -> np.ndarray:
    pixels = all_pixels(camera)
    out = np.zeros((len(pixels), 3))
    for start in range(0, len(pixels), chunk):
        rays = generate_rays(camera, pixels[start:start + chunk])
        out[start:start + chunk] = march_rays(
            field, rays.origins, rays.directions, rays.near, rays.far,
            background, n_samples=n_samples, region=region)
    return out.reshape(camera.height, camera.width, 3)


def generate_fixture(spec: FixtureSpec) -> SceneDataset:
    """Render a posed multi-view dataset of the analytic volume.

    Cameras sit evenly on a sphere around the scene. Images go through 8-bit
    quantization so that saving and reloading them is lossless.
    """
    field = spec.field()
    train_cams = sphere_cameras(spec.train_cameras, spec.camera_radius, spec.fov_x,
                                spec.resolution, spec.resolution)
    held_cams = sphere_cameras(spec.heldout_cameras, spec.camera_radius, spec.fov_x,
                               spec.resolution, spec.resolution, seed=spec.seed + 7)
    background = np.asarray(spec.background, dtype=np.float64)
    frames = []
    for cam in train_cams + held_cams:
        image = render_reference_view(field, cam, background)
        frames.append((quantize_like_png(image), cam))
    train_idx = list(range(spec.train_cameras))
    held_idx = list(range(spec.train_cameras, spec.train_cameras + spec.heldout_cameras))
    return SceneDataset(frames, background, train_idx, held_idx)


def default_fixture_spec(resolution: int = 128, train_cameras: int = 42,
                         heldout_cameras: int = 12) -> FixtureSpec:
    """Three nested translucent shells with a cut-away opening, lit by a headlight.

    The outer shells are clipped on the +x side so every region is directly
    visible from some cameras (the classic onion-cut volume-vis arrangement);
    this is what lets palette extraction recover each region's color.
    """
    center = (0.5, 0.5, 0.5)
    cut = (1.0, 0.0, 0.0)
    regions = (
        FixtureRegion(SpherePrimitive(center, 0.12), (0.95, 0.35, 0.08), 0.95),
        FixtureRegion(SpherePrimitive(center, 0.24, inner_radius=0.17,
                                      clip_normal=cut, clip_offset=0.06),
                      (0.15, 0.75, 0.20), 0.45),
        FixtureRegion(SpherePrimitive(center, 0.36, inner_radius=0.30,
                                      clip_normal=cut, clip_offset=-0.04),
                      (0.15, 0.25, 0.90), 0.30),
    )
    return FixtureSpec(regions=regions, resolution=resolution,
                       train_cameras=train_cameras, heldout_cameras=heldout_cameras,
                       shading=0.0, specular=0.2)
