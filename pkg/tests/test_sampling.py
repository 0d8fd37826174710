from __future__ import annotations

import pytest
import torch

from volstyle.sampling import sample_along_ray, sample_depths


def _rays(n=1):
    o = torch.zeros(n, 3)
    d = torch.tensor([[0.0, 0.0, -1.0]]).expand(n, 3)
    return o, d


def test_midpoints_of_uniform_bins():
    o, d = _rays()
    batch = sample_along_ray(o, d, torch.tensor([0.0]), torch.tensor([1.0]), 2)
    assert torch.allclose(batch.depths, torch.tensor([[0.25, 0.75]]))


def test_zero_samples_rejected():
    o, d = _rays()
    with pytest.raises(ValueError):
        sample_along_ray(o, d, torch.tensor([0.0]), torch.tensor([1.0]), 0)


def test_same_seed_identical_depths():
    o, d = _rays()
    near, far = torch.tensor([0.1]), torch.tensor([2.0])
    a = sample_along_ray(o, d, near, far, 16, stratified=True,
                         generator=torch.Generator().manual_seed(11))
    b = sample_along_ray(o, d, near, far, 16, stratified=True,
                         generator=torch.Generator().manual_seed(11))
    assert torch.equal(a.depths, b.depths)


def test_depths_strictly_increasing_and_in_range():
    o, d = _rays(8)
    near = torch.full((8,), 0.3)
    far = torch.full((8,), 1.7)
    batch = sample_along_ray(o, d, near, far, 33, stratified=True,
                             generator=torch.Generator().manual_seed(3))
    assert bool((batch.depths.diff(dim=-1) > 0).all())
    assert bool((batch.depths >= 0.3).all()) and bool((batch.depths <= 1.7).all())


def test_stratified_bin_means_converge_to_midpoints():
    # Monte-Carlo: per-bin mean depth over many seeds converges to bin midpoint.
    m = 100
    trials = 10_000
    acc = torch.zeros(m, dtype=torch.float64)
    near = torch.tensor([0.0], dtype=torch.float64)
    far = torch.tensor([1.0], dtype=torch.float64)
    for seed in range(trials):
        depths = sample_depths(near, far, m, stratified=True,
                               generator=torch.Generator().manual_seed(seed))
        acc += depths[0]
    means = acc / trials
    midpoints = (torch.arange(m, dtype=torch.float64) + 0.5) / m
    assert float((means - midpoints).abs().max()) < 1e-2


def test_positions_follow_ray():
    o = torch.tensor([[1.0, 2.0, 3.0]])
    d = torch.tensor([[0.0, 1.0, 0.0]])
    batch = sample_along_ray(o, d, torch.tensor([0.0]), torch.tensor([4.0]), 4)
    assert torch.allclose(batch.positions[0, :, 1], torch.tensor([2.5, 3.5, 4.5, 5.5]))
    assert torch.allclose(batch.positions[0, :, 0], torch.full((4,), 1.0))
