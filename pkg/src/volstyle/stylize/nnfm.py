"""Nearest-neighbor feature matching loss.

For each region pair, every rendering feature vector is matched to its
nearest style feature vector under cosine distance; the loss averages these
minima over feature vectors and regions. Values lie in [0, 2].
"""

from __future__ import annotations

import torch

_CHUNK = 256


def _unit(x: torch.Tensor) -> torch.Tensor:
    return x / x.norm(dim=-1, keepdim=True).clamp_min(1e-12)


def nearest_cosine_distances(render_vectors: torch.Tensor,
                             style_vectors: torch.Tensor) -> torch.Tensor:
    """(N,) distance from each render vector to its closest style vector."""
    rn = _unit(render_vectors)
    sn = _unit(style_vectors)
    mins = []
    for start in range(0, len(rn), _CHUNK):
        block = rn[start:start + _CHUNK]
        dist = 1.0 - (block[:, None, :] * sn[None, :, :]).sum(dim=-1)  # (B, K)
        mins.append(dist.min(dim=-1).values)
    return torch.cat(mins)


def nnfm_loss(render_features: list[torch.Tensor],
              style_features: list[torch.Tensor]) -> torch.Tensor:
    """Mean nearest-neighbor cosine distance over regions.

    Both lists hold (N, C) feature-vector tensors, one entry per region, in
    matching order. Each region's term is averaged over its own render
    vectors, then regions are averaged.
    """
    if len(render_features) != len(style_features):
        raise ValueError("render and style feature lists must pair up")
    if not render_features:
        raise ValueError("need at least one region")
    total = None
    for render, style in zip(render_features, style_features):
        if render.numel() == 0 or style.numel() == 0:
            raise ValueError("empty feature map")
        term = nearest_cosine_distances(render, style).sum() / render.shape[0]
        total = term if total is None else total + term
    return total / len(render_features)
