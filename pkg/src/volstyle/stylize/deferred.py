"""Deferred backpropagation: image-level losses under bounded memory.

Pass 1 renders the full image without gradient tracking and backpropagates the
loss only to pixel values. Pass 2 re-renders tile by tile with gradients
enabled, contracting each tile against its cached pixel-gradient block; the
accumulated parameter gradients equal whole-graph backpropagation.
"""

from __future__ import annotations

from typing import Callable

import torch

TileRender = Callable[[int, int, int, int], torch.Tensor]  # row0,row1,col0,col1 -> (h,w,3)


def _tiles(height: int, width: int, tile: int):
    for r0 in range(0, height, tile):
        for c0 in range(0, width, tile):
            yield r0, min(r0 + tile, height), c0, min(c0 + tile, width)


def deferred_backprop(render_tile: TileRender, loss_on_image, height: int, width: int,
                      *, tile_size: int = 64) -> tuple[float, torch.Tensor]:
    """Accumulate parameter gradients of loss_on_image(render) without storing
    the full render graph.

    render_tile must be deterministic across the two passes. Tiles larger than
    the image are clamped. Returns (loss value, pixel gradient image).
    """
    tile_size = max(1, min(tile_size, max(height, width)))
    with torch.no_grad():
        rows = []
        for r0 in range(0, height, tile_size):
            r1 = min(r0 + tile_size, height)
            cols = [render_tile(r0, r1, c0, min(c0 + tile_size, width))
                    for c0 in range(0, width, tile_size)]
            rows.append(torch.cat(cols, dim=1))
        image = torch.cat(rows, dim=0)

    leaf = image.detach().clone().requires_grad_(True)
    loss = loss_on_image(leaf)
    loss.backward()
    pixel_grads = leaf.grad.detach()

    for r0, r1, c0, c1 in _tiles(height, width, tile_size):
        block = pixel_grads[r0:r1, c0:c1]
        if not bool((block != 0).any()):
            continue
        out = render_tile(r0, r1, c0, c1)
        (out * block).sum().backward()
    return float(loss), pixel_grads
