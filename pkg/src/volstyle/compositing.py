"""Differentiable volume compositing.

Per ray, the transmittance of segment i is w_i = exp(-(t_i - t_{i-1}) * sigma_i)
with t_0 the near-plane depth; the accumulated transmittance in front of sample
i is alpha_i = prod_{j<i} w_j, and the pixel color is

    sum_i alpha_i (1 - w_i) c_i  +  (prod_i w_i) * background.

The per-sample contributions telescope, so contributions plus residual
transmittance always sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


class ContractViolation(ValueError):
    """Raised when compositing inputs break their declared contracts."""


@dataclass
class CompositeTrace:
    segment_transmittance: torch.Tensor  # (R, M), w_i in (0, 1]
    accumulated_transmittance: torch.Tensor  # (R, M), alpha_i in (0, 1]
    residual_transmittance: torch.Tensor  # (R,), transmittance past the last sample

    @property
    def contribution(self) -> torch.Tensor:
        """(R, M) per-sample color weights alpha_i * (1 - w_i)."""
        return self.accumulated_transmittance * (1.0 - self.segment_transmittance)


def composite(sigmas: torch.Tensor, colors: torch.Tensor, depths: torch.Tensor,
              t0: torch.Tensor, background: torch.Tensor,
              *, validate: bool = True) -> tuple[torch.Tensor, CompositeTrace]:
    """Composite sampled densities and colors into pixel colors.

    sigmas: (R, M) nonnegative; colors: (R, M, 3); depths: (R, M) increasing;
    t0: (R,) near depths; background: (3,) or (R, 3). Returns ((R, 3) pixels,
    trace). Differentiable w.r.t. sigmas and colors.
    """
    if sigmas.ndim == 1:
        sigmas = sigmas[None]
        colors = colors[None]
        depths = depths[None]
    t0 = torch.as_tensor(t0, dtype=depths.dtype, device=depths.device).reshape(-1)
    if validate and bool((sigmas < 0).any()):
        raise ContractViolation("negative density")

    deltas = torch.diff(depths, dim=-1, prepend=t0[:, None])
    w = torch.exp(-deltas * sigmas)  # (R, M)
    # Exclusive cumulative product: alpha_1 = 1, alpha_{i+1} = alpha_i * w_i.
    alpha = torch.cumprod(torch.cat([torch.ones_like(w[:, :1]), w[:, :-1]], dim=-1), dim=-1)
    residual = alpha[:, -1] * w[:, -1]

    weights = alpha * (1.0 - w)
    background = torch.as_tensor(background, dtype=colors.dtype, device=colors.device)
    pixel = (weights[..., None] * colors).sum(dim=1) + residual[:, None] * background
    return pixel, CompositeTrace(w, alpha, residual)
