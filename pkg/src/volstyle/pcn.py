"""Palette color network: palette-constrained appearance and its edits.

The diffuse color at a point is an intensity-scaled convex combination of
trainable palette colors plus small per-palette offsets; a separate lighting
branch predicts a grayscale view-dependent specular term. The softmax palette
weights classify every point to its dominant palette color, which drives
region-restricted rendering and per-region edits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .fields import MLP, ModelConfig, RadianceField
from .hashgrid import HashGrid
from .sh import sh_encode


class EditError(ValueError):
    pass


# --- torch HSB helpers (render-time recoloring) -----------------------------

def rgb_to_hsb_t(rgb: torch.Tensor) -> torch.Tensor:
    """(..., 3) RGB in [0,1] -> (..., 3) hue/saturation/brightness."""
    r, g, b = rgb.unbind(-1)
    mx = rgb.max(dim=-1).values
    mn = rgb.min(dim=-1).values
    delta = mx - mn
    safe = delta.clamp_min(1e-12)
    hue_r = ((g - b) / safe) % 6.0
    hue_g = (b - r) / safe + 2.0
    hue_b = (r - g) / safe + 4.0
    hue = torch.where(mx == r, hue_r, torch.where(mx == g, hue_g, hue_b)) / 6.0
    hue = torch.where(delta == 0, torch.zeros_like(hue), hue % 1.0)
    sat = torch.where(mx == 0, torch.zeros_like(mx), delta / mx.clamp_min(1e-12))
    return torch.stack([hue, sat, mx], dim=-1)


def hsb_to_rgb_t(hsb: torch.Tensor) -> torch.Tensor:
    h, s, v = hsb.unbind(-1)
    h6 = (h % 1.0) * 6.0
    c = v * s
    x = c * (1.0 - (h6 % 2.0 - 1.0).abs())
    zero = torch.zeros_like(c)
    # RGB patterns per hue sector, gathered by sector index.
    patterns = torch.stack([
        torch.stack([c, x, zero], dim=-1),
        torch.stack([x, c, zero], dim=-1),
        torch.stack([zero, c, x], dim=-1),
        torch.stack([zero, x, c], dim=-1),
        torch.stack([x, zero, c], dim=-1),
        torch.stack([c, zero, x], dim=-1),
    ], dim=-2)  # (..., 6, 3)
    sector = h6.floor().long().clamp(0, 5)
    rgb = torch.gather(patterns, -2, sector[..., None, None].expand(*sector.shape, 1, 3))
    return rgb.squeeze(-2) + (v - c)[..., None]


def shift_hsb(rgb: torch.Tensor, delta: torch.Tensor) -> torch.Tensor:
    """Apply an HSB delta: hue wraps mod 1, saturation/brightness clamp to [0,1]."""
    hsb = rgb_to_hsb_t(rgb.clamp(0.0, 1.0))
    hue = (hsb[..., 0] + delta[..., 0]) % 1.0
    sat = (hsb[..., 1] + delta[..., 1]).clamp(0.0, 1.0)
    bri = (hsb[..., 2] + delta[..., 2]).clamp(0.0, 1.0)
    return hsb_to_rgb_t(torch.stack([hue, sat, bri], dim=-1))


@dataclass
class EditState:
    """Render-time edits per palette color; parameters never change."""

    hsb_deltas: np.ndarray  # (P, 3) circular hue delta, sat delta, brightness delta
    opacity_scales: np.ndarray  # (P,) >= 0
    lighting_scales: np.ndarray  # (P,) >= 0

    def __post_init__(self) -> None:
        self.hsb_deltas = np.asarray(self.hsb_deltas, dtype=np.float64).reshape(-1, 3)
        self.opacity_scales = np.asarray(self.opacity_scales, dtype=np.float64).reshape(-1)
        self.lighting_scales = np.asarray(self.lighting_scales, dtype=np.float64).reshape(-1)
        if np.any(self.opacity_scales < 0) or np.any(self.lighting_scales < 0):
            raise EditError("opacity and lighting scales must be nonnegative")
        if not (len(self.hsb_deltas) == len(self.opacity_scales) == len(self.lighting_scales)):
            raise EditError("edit state arrays disagree on palette count")

    @staticmethod
    def identity(n_palette: int) -> "EditState":
        return EditState(np.zeros((n_palette, 3)), np.ones(n_palette), np.ones(n_palette))

    @property
    def n_palette(self) -> int:
        return len(self.opacity_scales)

    def is_identity(self) -> bool:
        return bool(np.all(self.hsb_deltas == 0) and np.all(self.opacity_scales == 1)
                    and np.all(self.lighting_scales == 1))

    def recolored_indices(self) -> list[int]:
        return [i for i in range(self.n_palette) if np.any(self.hsb_deltas[i] != 0)]

    def patched(self, index: int, *, dh: float | None = None, ds: float | None = None,
                db: float | None = None, opacity: float | None = None,
                lighting: float | None = None) -> "EditState":
        if not 0 <= index < self.n_palette:
            raise EditError(f"palette index {index} out of range")
        hsb = self.hsb_deltas.copy()
        op = self.opacity_scales.copy()
        li = self.lighting_scales.copy()
        if dh is not None:
            hsb[index, 0] = dh
        if ds is not None:
            hsb[index, 1] = ds
        if db is not None:
            hsb[index, 2] = db
        if opacity is not None:
            op[index] = opacity
        if lighting is not None:
            li[index] = lighting
        return EditState(hsb, op, li)

    def to_json(self) -> list[dict]:
        return [{"palette": i, "dh": float(self.hsb_deltas[i, 0]),
                 "ds": float(self.hsb_deltas[i, 1]), "db": float(self.hsb_deltas[i, 2]),
                 "opacity": float(self.opacity_scales[i]),
                 "lighting": float(self.lighting_scales[i])}
                for i in range(self.n_palette)]


class PCNModel(nn.Module):
    """Palette hash-grid encoder, palette MLP, lighting MLP, palette colors."""

    def __init__(self, config: ModelConfig, palette: np.ndarray,
                 *, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        palette = np.asarray(palette, dtype=np.float64).reshape(-1, 3)
        self.n_palette = len(palette)
        if self.n_palette < 1:
            raise ValueError("palette must be nonempty")
        self.palette_encoder = HashGrid(config.color_grid, generator=generator, dtype=dtype)
        out_dim = 1 + self.n_palette + 3 * self.n_palette  # intensity, weights, offsets
        self.palette_mlp = MLP([config.color_grid.output_dim, config.hidden, out_dim],
                               generator=generator, dtype=dtype)
        sh_dim = config.sh_degree ** 2
        self.lighting_mlp = MLP([config.geo_features + sh_dim, config.hidden, 1],
                                generator=generator, dtype=dtype)
        self.palette = nn.Parameter(torch.as_tensor(palette, dtype=dtype))

    def warm_start_lighting(self, base: RadianceField) -> None:
        """Copy the base color head's hidden layers into the lighting branch.

        Both heads see the same (geometry feature, encoded direction) input, so
        the shallow layers transfer; the 1-channel output layer starts fresh.
        """
        with torch.no_grad():
            for src, dst in zip(base.color_head.hidden_layers(),
                                self.lighting_mlp.hidden_layers()):
                dst.weight.copy_(src.weight)
                dst.bias.copy_(src.bias)

    def palette_outputs(self, positions: torch.Tensor
                        ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(N,3) -> intensity (N,), weights (N,P) summing to 1, offsets (N,P,3)."""
        raw = self.palette_mlp(self.palette_encoder(positions))
        p = self.n_palette
        intensity = F.softplus(raw[:, 0])
        weights = torch.softmax(raw[:, 1:1 + p], dim=-1)
        offsets = raw[:, 1 + p:].reshape(-1, p, 3)
        return intensity, weights, offsets

    def specular(self, geo: torch.Tensor, directions: torch.Tensor) -> torch.Tensor:
        """Grayscale view-dependent specular term, (N,) >= 0."""
        sh = sh_encode(directions, self.config.sh_degree, check_unit=False)
        return F.softplus(self.lighting_mlp(torch.cat([geo, sh], dim=-1))[:, 0])

    def diffuse_from(self, intensity: torch.Tensor, weights: torch.Tensor,
                     offsets: torch.Tensor, *, palette: torch.Tensor | None = None,
                     hsb_deltas: torch.Tensor | None = None) -> torch.Tensor:
        """Intensity-scaled convex combination of (shifted) palette + offsets."""
        base = self.palette if palette is None else palette
        terms = base[None, :, :] + offsets  # (N, P, 3)
        if hsb_deltas is not None:
            edited = torch.nonzero(hsb_deltas.abs().sum(-1) > 0, as_tuple=False)[:, 0]
            if len(edited):
                terms = terms.clone()
                for i in edited.tolist():
                    terms[:, i, :] = shift_hsb(terms[:, i, :], hsb_deltas[i])
        return intensity[:, None] * (weights[..., None] * terms).sum(dim=1)


def classify_weights(weights: torch.Tensor) -> torch.Tensor:
    """Argmax palette index per point; ties break to the lowest index."""
    maxima = weights.max(dim=-1, keepdim=True).values
    idx = torch.arange(weights.shape[-1], device=weights.device)
    candidates = torch.where(weights == maxima, idx, weights.shape[-1])
    return candidates.min(dim=-1).values


def eval_pcn(model: PCNModel, positions: torch.Tensor, directions: torch.Tensor,
             edits: EditState | None = None, *, geo: torch.Tensor | None = None,
             base: RadianceField | None = None) -> dict[str, torch.Tensor]:
    """Full color model at sample points.

    Returns color c = c_s * lighting_scale_k + diffuse, plus every intermediate
    (specular, diffuse, weights, intensity, offsets, classification). Either a
    geometry feature batch or the base field to compute it must be given.
    """
    if geo is None:
        if base is None:
            raise ValueError("need geometry features or the base field")
        _, geo = base.eval_density(positions)
    intensity, weights, offsets = model.palette_outputs(positions)
    spec = model.specular(geo, directions)
    k = classify_weights(weights)

    hsb = None
    light = spec
    if edits is not None and not edits.is_identity():
        hsb = torch.as_tensor(edits.hsb_deltas, dtype=positions.dtype,
                              device=positions.device)
        lscale = torch.as_tensor(edits.lighting_scales, dtype=positions.dtype,
                                 device=positions.device)
        light = spec * lscale[k]
    diffuse = model.diffuse_from(intensity, weights, offsets, hsb_deltas=hsb)
    color = light[:, None] + diffuse
    return {"color": color, "specular": spec, "diffuse": diffuse,
            "weights": weights, "intensity": intensity, "offsets": offsets,
            "classify": k}


def classify(model: PCNModel, positions: torch.Tensor) -> torch.Tensor:
    """Palette index of each position's dominant palette weight."""
    _, weights, _ = model.palette_outputs(positions)
    return classify_weights(weights)
