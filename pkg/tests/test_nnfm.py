from __future__ import annotations

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from volstyle.stylize.nnfm import nearest_cosine_distances, nnfm_loss


def test_self_match_is_zero():
    gen = torch.Generator().manual_seed(0)
    feats = torch.randn(12, 8, generator=gen, dtype=torch.float64)
    loss = nnfm_loss([feats, feats.clone()], [feats.clone(), feats.clone()])
    assert float(loss) < 1e-12


def test_orthogonal_single_vectors():
    render = torch.tensor([[1.0, 0.0]])
    style = torch.tensor([[0.0, 1.0]])
    assert float(nnfm_loss([render], [style])) == pytest.approx(1.0)


def test_matches_exhaustive_double_loop_oracle():
    gen = torch.Generator().manual_seed(1)
    render = torch.randn(5, 16, generator=gen, dtype=torch.float64)
    style = torch.randn(7, 16, generator=gen, dtype=torch.float64)
    got = nnfm_loss([render], [style])

    def unit(v):
        return v / v.norm().clamp_min(1e-12)

    mins = []
    for j in range(5):
        dists = []
        for k in range(7):
            dists.append(1.0 - (unit(render[j]) * unit(style[k])).sum())
        mins.append(torch.stack(dists).min())
    expect = torch.stack(mins).sum() / 5
    assert float(got) == pytest.approx(float(expect), abs=1e-14)


def test_region_averaging():
    a_r = torch.tensor([[1.0, 0.0]])
    a_s = torch.tensor([[1.0, 0.0]])  # distance 0
    b_r = torch.tensor([[1.0, 0.0]])
    b_s = torch.tensor([[0.0, 1.0]])  # distance 1
    loss = nnfm_loss([a_r, b_r], [a_s, b_s])
    assert float(loss) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_invariance_and_bounds(seed):
    gen = torch.Generator().manual_seed(seed)
    render = torch.randn(6, 4, generator=gen, dtype=torch.float64)
    style = torch.randn(9, 4, generator=gen, dtype=torch.float64)
    loss = nnfm_loss([render], [style])
    perm = torch.randperm(9, generator=gen)
    loss_p = nnfm_loss([render], [style[perm]])
    assert float(loss) == pytest.approx(float(loss_p), abs=1e-12)
    assert 0.0 <= float(loss) <= 2.0


def test_empty_features_rejected():
    with pytest.raises(ValueError, match="empty"):
        nnfm_loss([torch.zeros(0, 4)], [torch.ones(3, 4)])
    with pytest.raises(ValueError, match="region"):
        nnfm_loss([], [])
    with pytest.raises(ValueError, match="pair"):
        nnfm_loss([torch.ones(1, 4)], [])


def test_chunked_path_matches_small_path():
    gen = torch.Generator().manual_seed(3)
    render = torch.randn(700, 8, generator=gen, dtype=torch.float64)  # crosses chunk
    style = torch.randn(40, 8, generator=gen, dtype=torch.float64)
    direct = nearest_cosine_distances(render, style)
    per_row = torch.stack([nearest_cosine_distances(render[i:i + 1], style)[0]
                           for i in range(700)])
    assert torch.allclose(direct, per_row, atol=1e-14)


def test_gradient_flows_to_render_features():
    gen = torch.Generator().manual_seed(4)
    render = torch.randn(5, 6, generator=gen, dtype=torch.float64, requires_grad=True)
    style = torch.randn(8, 6, generator=gen, dtype=torch.float64)
    nnfm_loss([render], [style]).backward()
    assert render.grad is not None
    assert float(render.grad.abs().sum()) > 0
