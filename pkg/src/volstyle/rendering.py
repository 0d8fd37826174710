"""Full-image rendering across pipeline stages.

A SceneModels bundle carries the base field plus whatever later-stage networks
exist; render_view dispatches on mode (base / pcn / region / stylized) and
always samples deterministically so identical snapshots produce identical
images.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import torch

from .cameras import Camera, all_pixels, generate_rays
from .compositing import CompositeTrace, composite
from .distill import UCNModel
from .fields import ModelConfig, RadianceField
from .pcn import EditState, PCNModel, classify_weights, eval_pcn, shift_hsb
from .sampling import sample_along_ray

STAGE_ORDER = {"empty": 0, "base": 1, "pcn": 2, "distilled": 3, "stylized": 4}

RENDER_SAMPLES = 64  # samples per ray for full renders; matches fixture training


class RenderError(ValueError):
    pass


@dataclass
class SceneModels:
    config: ModelConfig
    base: RadianceField | None = None
    pcn: PCNModel | None = None
    ucn: UCNModel | None = None
    pre_style_ucn: dict | None = None  # UCN state captured before stylization
    stylized: set[int] = dataclass_field(default_factory=set)
    stage: str = "empty"

    @property
    def n_palette(self) -> int:
        return self.pcn.n_palette if self.pcn is not None else 0

    def at_least(self, stage: str) -> bool:
        return STAGE_ORDER[self.stage] >= STAGE_ORDER[stage]


def trace_rays(field_fn, origins: torch.Tensor, directions: torch.Tensor,
               near: torch.Tensor, far: torch.Tensor, n_samples: int,
               background, *, stratified: bool = False,
               generator: torch.Generator | None = None
               ) -> tuple[torch.Tensor, CompositeTrace, dict]:
    """Sample, evaluate and composite a ray batch.

    field_fn(points, dirs) -> (sigma, colors, extras) is only evaluated for
    samples inside the unit cube; outside samples contribute zero density.
    Differentiable whenever field_fn is.
    """
    batch = sample_along_ray(origins, directions, near, far, n_samples,
                             stratified=stratified, generator=generator)
    n_rays, m = batch.depths.shape
    pts = batch.positions.reshape(-1, 3)
    dirs = directions[:, None, :].expand(n_rays, m, 3).reshape(-1, 3)
    inside = torch.all((pts >= 0.0) & (pts <= 1.0), dim=-1)

    sigma = torch.zeros(n_rays * m, dtype=pts.dtype, device=pts.device)
    colors = torch.zeros(n_rays * m, 3, dtype=pts.dtype, device=pts.device)
    extras: dict = {}
    if bool(inside.any()):
        s_in, c_in, extras = field_fn(pts[inside], dirs[inside])
        sigma = torch.index_put(sigma, (inside.nonzero()[:, 0],), s_in)
        colors = torch.index_put(colors, (inside.nonzero()[:, 0],), c_in)
    pixels, trace = composite(sigma.reshape(n_rays, m), colors.reshape(n_rays, m, 3),
                              batch.depths, batch.t0, background, validate=False)
    return pixels, trace, extras


def _base_field_fn(base: RadianceField):
    def field_fn(pts, dirs):
        sigma, geo = base.eval_density(pts)
        return sigma, base.eval_color(geo, dirs), {}
    return field_fn


def _pcn_field_fn(base: RadianceField, pcn: PCNModel, edits: EditState | None):
    op_scales = None
    if edits is not None and not edits.is_identity():
        op_scales = torch.as_tensor(edits.opacity_scales,
                                    dtype=next(pcn.parameters()).dtype)

    def field_fn(pts, dirs):
        sigma, geo = base.eval_density(pts)
        out = eval_pcn(pcn, pts, dirs, edits, geo=geo)
        if op_scales is not None:
            sigma = sigma * op_scales[out["classify"]]
        return sigma, out["color"], out
    return field_fn


def _region_field_fn(base: RadianceField, pcn: PCNModel, region: int,
                     ucn: UCNModel | None):
    """Region-restricted diffuse rendering: other regions contribute no density."""
    if not 0 <= region < pcn.n_palette:
        raise RenderError(f"region index {region} out of range")

    def field_fn(pts, dirs):
        sigma, _ = base.eval_density(pts)
        intensity, weights, offsets = pcn.palette_outputs(pts)
        k = classify_weights(weights)
        sigma = sigma * (k == region).to(sigma.dtype)
        if ucn is not None:
            color = ucn.color(pts)
        else:
            color = pcn.diffuse_from(intensity, weights, offsets)
        return sigma, color, {"classify": k}
    return field_fn


def _stylized_field_fn(base: RadianceField, pcn: PCNModel, ucn: UCNModel,
                       stylized: set[int], edits: EditState | None):
    if edits is not None:
        bad = sorted(set(edits.recolored_indices()) & stylized)
        if bad:
            raise RenderError(
                f"cannot recolor stylized region(s) {bad}: their color lives in "
                "the unrestricted network; reset stylization first")
    dtype = next(pcn.parameters()).dtype
    op_scales = lt_scales = hsb = None
    if edits is not None and not edits.is_identity():
        op_scales = torch.as_tensor(edits.opacity_scales, dtype=dtype)
        lt_scales = torch.as_tensor(edits.lighting_scales, dtype=dtype)
        hsb = torch.as_tensor(edits.hsb_deltas, dtype=dtype)
    member = torch.zeros(pcn.n_palette, dtype=torch.bool)
    for i in stylized:
        member[i] = True

    def field_fn(pts, dirs):
        sigma, geo = base.eval_density(pts)
        intensity, weights, offsets = pcn.palette_outputs(pts)
        k = classify_weights(weights)
        diffuse_pcn = pcn.diffuse_from(intensity, weights, offsets, hsb_deltas=hsb)
        diffuse = torch.where(member[k][:, None], ucn.color(pts), diffuse_pcn)
        spec = pcn.specular(geo, dirs)
        if lt_scales is not None:
            spec = spec * lt_scales[k]
        if op_scales is not None:
            sigma = sigma * op_scales[k]
        return sigma, spec[:, None] + diffuse, {"classify": k}
    return field_fn


def field_fn_for_mode(models: SceneModels, mode: str, *, edits: EditState | None = None,
                      region: int | None = None):
    if mode == "base":
        if models.base is None:
            raise RenderError("mode 'base' requires a trained base field")
        return _base_field_fn(models.base)
    if mode == "pcn":
        if not models.at_least("pcn"):
            raise RenderError("mode 'pcn' requires the palette network stage")
        return _pcn_field_fn(models.base, models.pcn, edits)
    if mode == "region":
        if not models.at_least("pcn"):
            raise RenderError("mode 'region' requires the palette network stage")
        if region is None:
            raise RenderError("mode 'region' needs a region index")
        ucn = models.ucn if models.at_least("distilled") else None
        return _region_field_fn(models.base, models.pcn, region, ucn)
    if mode == "stylized":
        if not models.at_least("stylized"):
            raise RenderError("mode 'stylized' requires completed stylization")
        return _stylized_field_fn(models.base, models.pcn, models.ucn,
                                  models.stylized, edits)
    raise RenderError(f"unknown render mode '{mode}'")


def render_pixels(models: SceneModels, camera: Camera, pixels: np.ndarray, mode: str,
                  background, *, edits: EditState | None = None,
                  region: int | None = None, n_samples: int = RENDER_SAMPLES,
                  field_fn=None) -> tuple[torch.Tensor, CompositeTrace]:
    """Differentiable render of selected pixels; colors are not clamped here."""
    if field_fn is None:
        field_fn = field_fn_for_mode(models, mode, edits=edits, region=region)
    dtype = next(models.base.parameters()).dtype
    rays = generate_rays(camera, pixels)
    origins = torch.as_tensor(rays.origins, dtype=dtype)
    dirs = torch.as_tensor(rays.directions, dtype=dtype)
    near = torch.as_tensor(rays.near, dtype=dtype)
    far = torch.as_tensor(rays.far, dtype=dtype)
    bg = torch.as_tensor(np.asarray(background, dtype=np.float64), dtype=dtype)
    pix, trace, _ = trace_rays(field_fn, origins, dirs, near, far, n_samples, bg)
    return pix, trace


def render_view(models: SceneModels, camera: Camera, mode: str = "pcn",
                background=(0.0, 0.0, 0.0), *, edits: EditState | None = None,
                region: int | None = None, n_samples: int = RENDER_SAMPLES,
                chunk: int = 8192, return_alpha: bool = False):
    """Full-image render -> (H, W, 3) float32 in [0,1] (plus alpha if asked)."""
    field_fn = field_fn_for_mode(models, mode, edits=edits, region=region)
    pixels = all_pixels(camera)
    out = np.zeros((len(pixels), 3), dtype=np.float32)
    alpha = np.zeros(len(pixels), dtype=np.float32)
    with torch.no_grad():
        for start in range(0, len(pixels), chunk):
            pix, trace = render_pixels(models, camera, pixels[start:start + chunk],
                                       mode, background, edits=edits, region=region,
                                       n_samples=n_samples, field_fn=field_fn)
            out[start:start + chunk] = pix.clamp(0.0, 1.0).to(torch.float32).numpy()
            alpha[start:start + chunk] = (1.0 - trace.residual_transmittance
                                          ).to(torch.float32).numpy()
    image = out.reshape(camera.height, camera.width, 3)
    if return_alpha:
        return image, alpha.reshape(camera.height, camera.width)
    return image
