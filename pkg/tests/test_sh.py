from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from volstyle.sh import sh_encode


def fibonacci_sphere(n: int) -> torch.Tensor:
    i = torch.arange(n, dtype=torch.float64)
    z = 1 - 2 * (i + 0.5) / n
    phi = math.pi * (3 - math.sqrt(5)) * i
    r = torch.sqrt(1 - z ** 2)
    return torch.stack([r * torch.cos(phi), r * torch.sin(phi), z], dim=-1)


def test_constant_band():
    dirs = fibonacci_sphere(32)
    out = sh_encode(dirs, 4)
    assert torch.allclose(out[:, 0], torch.full((32,), 0.28209479, dtype=torch.float64),
                          atol=1e-7)


def test_z_axis_kills_nonzero_m():
    out = sh_encode(torch.tensor([[0.0, 0.0, 1.0]]), 4)[0]
    # l-major, m ascending: indices of m != 0 within each band
    nonzero_m = [1, 3, 4, 5, 7, 8, 9, 10, 11, 13, 14, 15]
    for i in nonzero_m:
        assert abs(float(out[i])) < 1e-12
    # m = 0 entries are nonzero
    for i in (0, 2, 6, 12):
        assert abs(float(out[i])) > 1e-3


def test_output_size_is_degree_squared():
    dirs = fibonacci_sphere(4)
    for degree in (1, 2, 3, 4, 5):
        assert sh_encode(dirs, degree).shape == (4, degree ** 2)


def test_non_unit_direction_rejected():
    with pytest.raises(ValueError):
        sh_encode(torch.tensor([[0.0, 0.0, 1.5]]), 3)


def test_orthonormality_under_sphere_quadrature():
    n = 10_000
    dirs = fibonacci_sphere(n)
    basis = sh_encode(dirs, 4)  # (n, 16)
    # Uniform quadrature: integral ~ 4*pi/n * sum
    gram = (4 * math.pi / n) * basis.T @ basis
    assert float((gram - torch.eye(16, dtype=torch.float64)).abs().max()) < 1e-2


def test_pure_function():
    dirs = fibonacci_sphere(17)
    assert torch.equal(sh_encode(dirs, 4), sh_encode(dirs, 4))
