from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import check_gradients
from volstyle.compositing import ContractViolation, composite


def test_zero_density_returns_background():
    depths = torch.linspace(0.1, 1.0, 8)[None]
    sigmas = torch.zeros(1, 8)
    colors = torch.rand(1, 8, 3)
    bg = torch.tensor([0.2, 0.4, 0.6])
    pixel, trace = composite(sigmas, colors, depths, torch.tensor([0.0]), bg)
    assert torch.allclose(pixel[0], bg)
    assert torch.allclose(trace.residual_transmittance, torch.ones(1))


def test_opaque_first_sample_dominates():
    depths = torch.tensor([[1.0, 2.0]])
    sigmas = torch.tensor([[50.0, 1.0]])  # sigma_1 * (t_1 - t_0) = 50
    colors = torch.tensor([[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]])
    pixel, _ = composite(sigmas, colors, depths, torch.tensor([0.0]),
                         torch.tensor([1.0, 1.0, 1.0]))
    assert torch.allclose(pixel[0], torch.tensor([0.0, 1.0, 0.0]), atol=1e-6)


def test_homogeneous_medium_closed_form():
    m = 512
    depths = ((torch.arange(m, dtype=torch.float64) + 0.5) * 2.0 / m)[None]
    sigmas = torch.ones(1, m, dtype=torch.float64)
    colors = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64).expand(m, 3)[None]
    pixel, _ = composite(sigmas, colors, depths, torch.tensor([0.0]),
                         torch.zeros(3, dtype=torch.float64))
    expect = 1.0 - np.exp(-2.0)
    assert abs(float(pixel[0, 0]) - expect) < 2e-3
    assert float(pixel[0, 1]) == 0.0


def test_negative_density_rejected():
    depths = torch.tensor([[0.5]])
    with pytest.raises(ContractViolation):
        composite(torch.tensor([[-1.0]]), torch.ones(1, 1, 3), depths,
                  torch.tensor([0.0]), torch.zeros(3))


def test_trace_invariants():
    torch.manual_seed(0)
    depths = torch.sort(torch.rand(4, 16, dtype=torch.float64), dim=-1).values + 0.1
    sigmas = torch.rand(4, 16, dtype=torch.float64) * 5
    colors = torch.rand(4, 16, 3, dtype=torch.float64)
    pixel, trace = composite(sigmas, colors, depths, torch.full((4,), 0.05,
                             dtype=torch.float64), torch.zeros(3, dtype=torch.float64))
    # alpha_1 = 1 and alpha recursion
    assert torch.allclose(trace.accumulated_transmittance[:, 0],
                          torch.ones(4, dtype=torch.float64))
    recursion = trace.accumulated_transmittance[:, :-1] * trace.segment_transmittance[:, :-1]
    assert torch.allclose(trace.accumulated_transmittance[:, 1:], recursion)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 24))
def test_telescoping_and_energy_bound(seed, m):
    gen = torch.Generator().manual_seed(seed)
    depths = torch.sort(torch.rand(1, m, dtype=torch.float64, generator=gen),
                        dim=-1).values + 0.01
    sigmas = torch.rand(1, m, dtype=torch.float64, generator=gen) * 20
    colors = torch.rand(1, m, 3, dtype=torch.float64, generator=gen)
    t0 = torch.tensor([0.005], dtype=torch.float64)
    _, trace = composite(sigmas, colors, depths, t0, torch.zeros(3, dtype=torch.float64))

    deltas = torch.diff(depths, dim=-1, prepend=t0[:, None])
    expect_residual = torch.exp(-(deltas * sigmas).sum())
    assert abs(float(trace.residual_transmittance[0]) - float(expect_residual)) < 1e-10

    energy = float(trace.contribution.sum() + trace.residual_transmittance[0])
    assert abs(energy - 1.0) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_pixel_in_convex_hull_of_colors_and_background(seed):
    gen = torch.Generator().manual_seed(seed)
    m = 8
    depths = torch.sort(torch.rand(1, m, dtype=torch.float64, generator=gen),
                        dim=-1).values + 0.01
    sigmas = torch.rand(1, m, dtype=torch.float64, generator=gen) * 10
    colors = torch.rand(1, m, 3, dtype=torch.float64, generator=gen)
    bg = torch.rand(3, dtype=torch.float64, generator=gen)
    pixel, _ = composite(sigmas, colors, depths, torch.tensor([0.001],
                         dtype=torch.float64), bg)
    lo = torch.minimum(colors.amin(dim=1)[0], bg)
    hi = torch.maximum(colors.amax(dim=1)[0], bg)
    assert bool((pixel[0] >= lo - 1e-12).all()) and bool((pixel[0] <= hi + 1e-12).all())


def test_gradients_match_finite_differences():
    gen = torch.Generator().manual_seed(7)
    m = 6
    depths = torch.sort(torch.rand(2, m, dtype=torch.float64, generator=gen),
                        dim=-1).values + 0.05
    sigmas = (torch.rand(2, m, dtype=torch.float64, generator=gen) * 3)
    colors = torch.rand(2, m, 3, dtype=torch.float64, generator=gen)
    bg = torch.tensor([0.3, 0.1, 0.9], dtype=torch.float64)
    target = torch.rand(2, 3, dtype=torch.float64, generator=gen)

    def loss_fn():
        pixel, _ = composite(sigmas, colors, depths, torch.tensor([0.01, 0.02],
                             dtype=torch.float64), bg)
        return ((pixel - target) ** 2).sum()

    check_gradients(loss_fn, [sigmas, colors])
