"""Color transfer on the palette teacher and distillation into the free student.

The teacher is the trained palette network with its palette replaced by the
mean colors of the assigned style regions. The student (an unrestricted color
network sharing the palette encoder's output width) is first aligned to the
teacher's encoder features, then to its diffuse colors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .cameras import Camera, all_pixels, generate_rays, orbit_camera
from .fields import MLP, ModelConfig, RadianceField
from .hashgrid import HashGrid
from .pcn import PCNModel
from .sampling import sample_along_ray


class DistillError(ValueError):
    pass


class UCNModel(nn.Module):
    """Unrestricted color field: hash-grid encoder + MLP to sigmoid RGB."""

    def __init__(self, config: ModelConfig, *, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        self.encoder = HashGrid(config.color_grid, generator=generator, dtype=dtype)
        self.mlp = MLP([config.color_grid.output_dim, config.hidden, 3],
                       generator=generator, dtype=dtype)

    def color(self, positions: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.mlp(self.encoder(positions)))


@dataclass(frozen=True)
class KDConfig:
    stage1_iters: int = 150  # encoder feature alignment
    stage2_iters: int = 500  # diffuse color matching
    views: int = 312  # random cameras on the scene sphere
    rays_per_view: int = 1024
    n_samples: int = 48
    learning_rate: float = 0.01
    lr_final_ratio: float = 0.01
    camera_radius: float = 1.4
    fov_x: float = 0.9
    view_resolution: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stage1_iters < 0 or self.stage2_iters <= 0 or self.views <= 0:
            raise DistillError("iteration and view counts must be positive")


def preset_kd_config(**overrides) -> KDConfig:
    """The alternative published schedule: 624 iterations over 312 views."""
    merged = {"stage1_iters": 124, "stage2_iters": 500, "views": 312}
    merged.update(overrides)
    return KDConfig(**merged)


def transfer_palette_colors(pcn: PCNModel, style_means: dict[int, np.ndarray]) -> PCNModel:
    """Teacher with its palette replaced by per-region style mean colors.

    Indices absent from style_means keep their original color (regions marked
    to preserve the original appearance). Every index must be accounted for by
    the caller's assignment; unknown indices raise.
    """
    bad = [i for i in style_means if not 0 <= i < pcn.n_palette]
    if bad:
        raise DistillError(f"style assignment names unknown palette indices {bad}")
    teacher = copy.deepcopy(pcn)
    with torch.no_grad():
        for i, mean in style_means.items():
            teacher.palette[i] = torch.as_tensor(mean, dtype=teacher.palette.dtype)
    for p in teacher.parameters():
        p.requires_grad_(False)
    return teacher


def _random_sphere_cameras(count: int, radius: float, fov_x: float, resolution: int,
                           rng: np.random.Generator) -> list[Camera]:
    cams = []
    for _ in range(count):
        azimuth = rng.uniform(0, 2 * np.pi)
        elevation = np.arcsin(rng.uniform(-1, 1))
        cams.append(orbit_camera(azimuth, elevation, radius, fov_x, resolution, resolution))
    return cams


def sample_view_points(camera: Camera, n_rays: int, n_samples: int,
                       rng: np.random.Generator, generator: torch.Generator,
                       dtype: torch.dtype) -> torch.Tensor:
    """In-box ray sample positions from a random pixel batch of one view."""
    pix = all_pixels(camera)
    pick = rng.integers(0, len(pix), size=n_rays)
    rays = generate_rays(camera, pix[pick])
    origins = torch.as_tensor(rays.origins, dtype=dtype)
    dirs = torch.as_tensor(rays.directions, dtype=dtype)
    near = torch.as_tensor(rays.near, dtype=dtype)
    far = torch.as_tensor(rays.far, dtype=dtype)
    batch = sample_along_ray(origins, dirs, near, far, n_samples,
                             stratified=True, generator=generator)
    pts = batch.positions.reshape(-1, 3)
    inside = torch.all((pts >= 0.0) & (pts <= 1.0), dim=-1)
    return pts[inside]


def distill(teacher: PCNModel, student: UCNModel, config: KDConfig,
            *, on_iter=None) -> UCNModel:
    """Two-phase knowledge distillation updating only the student.

    Phase 1 matches encoder features (student encoder only); phase 2 matches
    the teacher's diffuse colors (encoder and MLP). Views are drawn uniformly
    at random on the scene sphere, seeded the same way every run.
    """
    if student.encoder.output_dim != teacher.palette_encoder.output_dim:
        raise DistillError(
            f"student encoder width {student.encoder.output_dim} must match "
            f"teacher palette encoder width {teacher.palette_encoder.output_dim}")
    dtype = student.encoder.table.dtype
    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    cameras = _random_sphere_cameras(config.views, config.camera_radius, config.fov_x,
                                     config.view_resolution, rng)

    total = config.stage1_iters + config.stage2_iters
    opt1 = torch.optim.Adam(student.encoder.parameters(), lr=config.learning_rate)
    opt2 = torch.optim.Adam(student.parameters(), lr=config.learning_rate)
    for it in range(total):
        camera = cameras[it % len(cameras)]
        pts = sample_view_points(camera, config.rays_per_view, config.n_samples,
                                 rng, generator, dtype)
        if len(pts) == 0:
            continue
        phase1 = it < config.stage1_iters
        opt = opt1 if phase1 else opt2
        # Each phase is its own optimization; the decay schedule restarts.
        if phase1:
            frac = it / max(1, config.stage1_iters - 1)
        else:
            frac = (it - config.stage1_iters) / max(1, config.stage2_iters - 1)
        for group in opt.param_groups:
            group["lr"] = config.learning_rate * config.lr_final_ratio ** frac
        opt.zero_grad()
        if phase1:
            with torch.no_grad():
                target = teacher.palette_encoder(pts)
            loss = ((target - student.encoder(pts)) ** 2).sum(dim=-1).mean()
        else:
            with torch.no_grad():
                intensity, weights, offsets = teacher.palette_outputs(pts)
                target = teacher.diffuse_from(intensity, weights, offsets).clamp(0.0, 1.0)
            loss = ((target - student.color(pts)) ** 2).sum(dim=-1).mean()
        if not torch.isfinite(loss):
            raise DistillError(f"non-finite distillation loss at iteration {it}")
        loss.backward()
        opt.step()
        if on_iter is not None:
            on_iter({"iter": it, "loss": float(loss), "phase": 1 if phase1 else 2})
    return student


def encoder_alignment_loss(teacher: PCNModel, student: UCNModel,
                           points: torch.Tensor) -> torch.Tensor:
    """Phase-1 objective on explicit points (teacher side detached)."""
    return ((teacher.palette_encoder(points).detach() - student.encoder(points)) ** 2
            ).sum(dim=-1).mean()


def color_matching_loss(teacher: PCNModel, student: UCNModel,
                        points: torch.Tensor) -> torch.Tensor:
    """Phase-2 objective on explicit points (teacher side detached)."""
    with torch.no_grad():
        intensity, weights, offsets = teacher.palette_outputs(points)
        target = teacher.diffuse_from(intensity, weights, offsets).clamp(0.0, 1.0)
    return ((target - student.color(points)) ** 2).sum(dim=-1).mean()


def density_weighted_probes(base: RadianceField, count: int,
                            *, seed: int = 0, candidates: int = 20000) -> torch.Tensor:
    """Probe positions sampled proportionally to per-point opacity 1 - e^-sigma.

    Keeps fidelity measurements from being dominated by empty space.
    """
    generator = torch.Generator().manual_seed(seed)
    dtype = next(base.parameters()).dtype
    pts = torch.rand(candidates, 3, generator=generator, dtype=dtype)
    with torch.no_grad():
        sigma, _ = base.eval_density(pts)
    weights = 1.0 - torch.exp(-sigma)
    if float(weights.sum()) <= 0:
        return pts[:count]
    idx = torch.multinomial(weights, count, replacement=True, generator=generator)
    return pts[idx]


def distillation_fidelity(teacher: PCNModel, student: UCNModel, probes: torch.Tensor) -> float:
    """Mean per-channel absolute diffuse-color gap at the given probes."""
    with torch.no_grad():
        intensity, weights, offsets = teacher.palette_outputs(probes)
        target = teacher.diffuse_from(intensity, weights, offsets).clamp(0.0, 1.0)
        got = student.color(probes)
    return float((target - got).abs().mean())
