"""Depth sampling along rays."""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class SampleBatch:
    """Sample depths and positions for a batch of rays.

    depths are strictly increasing per ray; t0 is the near-plane depth used as
    the first segment boundary during compositing.
    """

    positions: torch.Tensor  # (R, M, 3)
    depths: torch.Tensor  # (R, M)
    t0: torch.Tensor  # (R,)


def sample_depths(near: torch.Tensor, far: torch.Tensor, n_samples: int,
                  *, stratified: bool = False,
                  generator: torch.Generator | None = None) -> torch.Tensor:
    """Depths in (near, far): bin midpoints, optionally jittered within bins."""
    if n_samples < 1:
        raise ValueError("need at least one sample per ray")
    near = torch.as_tensor(near).reshape(-1, 1)
    far = torch.as_tensor(far).reshape(-1, 1)
    span = far - near
    edges = torch.arange(n_samples, dtype=near.dtype, device=near.device)
    if stratified:
        u = torch.rand((near.shape[0], n_samples), generator=generator,
                       dtype=near.dtype, device=near.device)
    else:
        u = torch.full((near.shape[0], n_samples), 0.5, dtype=near.dtype, device=near.device)
    return near + span * (edges + u) / n_samples


def sample_along_ray(origins: torch.Tensor, directions: torch.Tensor,
                     near: torch.Tensor, far: torch.Tensor, n_samples: int,
                     *, stratified: bool = False,
                     generator: torch.Generator | None = None) -> SampleBatch:
    """Sample positions along rays; deterministic given the generator state."""
    depths = sample_depths(near, far, n_samples, stratified=stratified, generator=generator)
    positions = origins[:, None, :] + directions[:, None, :] * depths[..., None]
    t0 = torch.as_tensor(near).reshape(-1).to(depths.dtype)
    return SampleBatch(positions=positions, depths=depths, t0=t0)
