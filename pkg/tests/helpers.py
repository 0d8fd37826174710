from __future__ import annotations

import torch


def finite_difference_grads(loss_fn, params: list[torch.Tensor],
                            eps: float = 1e-4) -> list[torch.Tensor]:
    """Central-difference gradients of a scalar loss w.r.t. each parameter."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = float(loss_fn())
                flat[i] = orig - eps
                lo = float(loss_fn())
                flat[i] = orig
                gflat[i] = (hi - lo) / (2 * eps)
            grads.append(g)
    return grads


def max_rel_error(a: torch.Tensor, b: torch.Tensor, floor: float = 1e-6) -> float:
    denom = torch.maximum(torch.maximum(a.abs(), b.abs()),
                          torch.full_like(a, floor))
    return float(((a - b).abs() / denom).max())


def check_gradients(loss_fn, params: list[torch.Tensor], *, eps: float = 1e-4,
                    rel_tol: float = 1e-3) -> float:
    """Assert autograd gradients match central differences; returns worst error."""
    for p in params:
        p.requires_grad_(True)
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    auto = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
            for p in params]
    fd = finite_difference_grads(loss_fn, params, eps=eps)
    worst = max(max_rel_error(a, f) for a, f in zip(auto, fd))
    assert worst < rel_tol, f"gradient mismatch: max rel err {worst:.3e}"
    return worst
