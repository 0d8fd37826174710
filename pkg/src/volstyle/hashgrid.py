"""Multiresolution hash-grid position encoding.

Each level overlays a virtual dense grid on the unit cube; vertex features
live in a fixed-size hash table and are combined by trilinear interpolation.
Level resolutions grow geometrically from base_resolution to max_resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

# Spatial hash primes (x coordinate left unmixed, as is conventional).
_PRIMES = (1, 2654435761, 805459861)


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    base_resolution: int = 16
    max_resolution: int = 2048
    table_size: int = 2 ** 19  # entries per level, power of two
    features_per_entry: int = 2

    def __post_init__(self) -> None:
        if self.levels < 1:
            raise ValueError("need at least one level")
        if self.table_size & (self.table_size - 1):
            raise ValueError("table_size must be a power of two")
        if self.max_resolution < self.base_resolution:
            raise ValueError("max_resolution must be >= base_resolution")

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_entry

    def resolutions(self) -> list[int]:
        """Per-level grid resolutions, a geometric progression."""
        if self.levels == 1:
            return [self.base_resolution]
        growth = math.exp((math.log(self.max_resolution) - math.log(self.base_resolution))
                          / (self.levels - 1))
        return [int(math.floor(self.base_resolution * growth ** i + 1e-9))
                for i in range(self.levels)]

    def to_dict(self) -> dict:
        return {"levels": self.levels, "base_resolution": self.base_resolution,
                "max_resolution": self.max_resolution, "table_size": self.table_size,
                "features_per_entry": self.features_per_entry}

    @staticmethod
    def from_dict(d: dict) -> "HashGridConfig":
        return HashGridConfig(**{k: int(v) for k, v in d.items()})


def _hash_corners(coords: torch.Tensor, table_size: int) -> torch.Tensor:
    """Spatial hash of integer grid coordinates into [0, table_size)."""
    h = coords[..., 0] * _PRIMES[0]
    h = torch.bitwise_xor(h, coords[..., 1] * _PRIMES[1])
    h = torch.bitwise_xor(h, coords[..., 2] * _PRIMES[2])
    return h & (table_size - 1)


class _TableLookup(torch.autograd.Function):
    """Row gather with a scatter-add backward (much faster than index_put)."""

    @staticmethod
    def forward(ctx, table: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
        ctx.save_for_backward(idx)
        ctx.rows = table.shape[0]
        return table.index_select(0, idx)

    @staticmethod
    def backward(ctx, grad_out: torch.Tensor):
        (idx,) = ctx.saved_tensors
        feats = grad_out.shape[-1]
        grad_table = torch.zeros(ctx.rows * feats, dtype=grad_out.dtype,
                                 device=grad_out.device)
        flat_idx = (idx[:, None] * feats
                    + torch.arange(feats, device=idx.device)).reshape(-1)
        grad_table.scatter_add_(0, flat_idx, grad_out.reshape(-1))
        return grad_table.reshape(ctx.rows, feats), None


class HashGrid(nn.Module):
    """Trainable hash-grid encoder over [0,1]^3. Out-of-box inputs are clamped."""

    def __init__(self, config: HashGridConfig, *, dtype: torch.dtype = torch.float32,
                 generator: torch.Generator | None = None, init_scale: float = 1e-4):
        super().__init__()
        self.config = config
        res = config.resolutions()
        self.register_buffer("_res", torch.tensor(res, dtype=torch.int64)[:, None, None],
                             persistent=False)
        self.register_buffer("_level_offsets",
                             torch.arange(config.levels, dtype=torch.int64)[:, None]
                             * config.table_size, persistent=False)
        table = torch.empty(config.levels * config.table_size, config.features_per_entry,
                            dtype=dtype)
        table.uniform_(-init_scale, init_scale, generator=generator)
        self.table = nn.Parameter(table)

    @property
    def output_dim(self) -> int:
        return self.config.output_dim

    def level_entry(self, level: int, coords: torch.Tensor) -> torch.Tensor:
        """Table entry for integer grid coordinates (N, 3) at one level."""
        idx = _hash_corners(coords, self.config.table_size) + level * self.config.table_size
        return self.table[idx]

    def forward(self, positions: torch.Tensor) -> torch.Tensor:
        """(N, 3) unit-cube positions -> (N, levels * features) encodings.

        All levels are evaluated in one batched pass; trilinear weights keep
        the output differentiable with respect to table entries and positions.
        """
        x = positions.clamp(0.0, 1.0)
        n = x.shape[0]
        levels = self.config.levels
        feats = self.config.features_per_entry
        mask = self.config.table_size - 1

        scaled = x[None, :, :] * self._res.to(x.dtype)  # (L, N, 3)
        base = torch.floor(scaled.detach()).to(torch.int64)
        base = torch.minimum(base, self._res - 1).clamp_min_(0)
        frac = scaled - base  # (L, N, 3); positions get gradients through frac

        # Hash products of the two corner slabs along each axis.
        x0 = base[..., 0] * _PRIMES[0]
        y0 = base[..., 1] * _PRIMES[1]
        z0 = base[..., 2] * _PRIMES[2]
        x1 = x0 + _PRIMES[0]
        y1 = y0 + _PRIMES[1]
        z1 = z0 + _PRIMES[2]

        wx1 = frac[..., 0:1]
        wy1 = frac[..., 1:2]
        wz1 = frac[..., 2:3]
        wx0 = 1.0 - wx1
        wy0 = 1.0 - wy1
        wz0 = 1.0 - wz1

        indices = []
        weights = []
        for xs, wx in ((x0, wx0), (x1, wx1)):
            for ys, wy in ((y0, wy0), (y1, wy1)):
                xy = torch.bitwise_xor(xs, ys)
                wxy = wx * wy
                for zs, wz in ((z0, wz0), (z1, wz1)):
                    indices.append((torch.bitwise_xor(xy, zs) & mask) + self._level_offsets)
                    weights.append(wxy * wz)
        # One gather for all corners and levels.
        idx = torch.stack(indices).reshape(-1)  # (8 * L * N,)
        w = torch.stack(weights)  # (8, L, N, 1)
        entries = _TableLookup.apply(self.table, idx).reshape(8, levels, n, feats)
        out = (entries * w).sum(dim=0)  # (L, N, F)
        return out.permute(1, 0, 2).reshape(n, levels * feats)
