from __future__ import annotations

import torch

from volstyle.stylize.deferred import deferred_backprop


class TinyImageField(torch.nn.Module):
    """Differentiable toy renderer: pixel color from coordinates via a small MLP."""

    def __init__(self, seed=0, h=16, w=16):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.h, self.w = h, w
        self.lin1 = torch.nn.Linear(2, 16, dtype=torch.float64)
        self.lin2 = torch.nn.Linear(16, 3, dtype=torch.float64)
        with torch.no_grad():
            for lin in (self.lin1, self.lin2):
                lin.weight.normal_(0, 0.5, generator=gen)
                lin.bias.normal_(0, 0.1, generator=gen)

    def render(self, r0, r1, c0, c1):
        rr = torch.arange(r0, r1, dtype=torch.float64)
        cc = torch.arange(c0, c1, dtype=torch.float64)
        grid = torch.stack(torch.meshgrid(rr / self.h, cc / self.w, indexing="ij"),
                           dim=-1)
        out = self.lin2(torch.relu(self.lin1(grid.reshape(-1, 2))))
        return torch.sigmoid(out).reshape(r1 - r0, c1 - c0, 3)


def nonlinear_loss(image: torch.Tensor) -> torch.Tensor:
    return (image ** 2).mean() + torch.sin(image.sum() * 0.1)


def direct_grads(field, loss_fn):
    for p in field.parameters():
        p.grad = None
    loss = loss_fn(field.render(0, field.h, 0, field.w))
    loss.backward()
    return [p.grad.clone() for p in field.parameters()], float(loss)


def deferred_grads(field, loss_fn, tile):
    for p in field.parameters():
        p.grad = None
    loss, pixel_grads = deferred_backprop(field.render, loss_fn, field.h, field.w,
                                          tile_size=tile)
    return [p.grad.clone() for p in field.parameters()], loss, pixel_grads


def test_tiled_gradients_match_whole_graph():
    field = TinyImageField()
    expect, loss_direct = direct_grads(field, nonlinear_loss)
    got, loss_deferred, _ = deferred_grads(field, nonlinear_loss, tile=8)
    assert abs(loss_direct - loss_deferred) < 1e-12
    for a, b in zip(expect, got):
        rel = float(((a - b).abs() / a.abs().clamp_min(1e-9)).max())
        assert rel < 1e-5


def test_single_pixel_tiles_degenerate_case():
    field = TinyImageField(h=6, w=5)
    expect, _ = direct_grads(field, nonlinear_loss)
    got, _, _ = deferred_grads(field, nonlinear_loss, tile=1)
    for a, b in zip(expect, got):
        assert float((a - b).abs().max()) < 1e-10


def test_oversized_tile_clamped():
    field = TinyImageField(h=4, w=4)
    expect, _ = direct_grads(field, nonlinear_loss)
    got, _, _ = deferred_grads(field, nonlinear_loss, tile=999)
    for a, b in zip(expect, got):
        assert float((a - b).abs().max()) < 1e-10


def test_sum_loss_gives_unit_pixel_gradients():
    field = TinyImageField(h=8, w=8)
    _, _, pixel_grads = deferred_grads(field, lambda img: img.sum(), tile=4)
    assert torch.equal(pixel_grads, torch.ones(8, 8, 3, dtype=torch.float64))


def test_gradient_accumulation_adds_up():
    # two deferred passes accumulate like two direct passes
    field = TinyImageField(h=8, w=8)
    for p in field.parameters():
        p.grad = None
    deferred_backprop(field.render, nonlinear_loss, 8, 8, tile_size=4)
    deferred_backprop(field.render, nonlinear_loss, 8, 8, tile_size=4)
    twice = [p.grad.clone() for p in field.parameters()]
    expect, _ = direct_grads(field, nonlinear_loss)
    for a, b in zip(twice, expect):
        assert float((a - 2 * b).abs().max()) < 1e-10
