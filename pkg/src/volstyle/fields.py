"""Neural field components: seeded MLPs, the base radiance field, snapshots."""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import torch
import torch.nn as nn

from .hashgrid import HashGrid, HashGridConfig
from .sh import sh_encode

_SNAPSHOT_VERSIONS = itertools.count(1)

# Raw density outputs pass through exp and are clamped to this ceiling.
DENSITY_CLAMP = 1.0e4


def seeded_linear(n_in: int, n_out: int, *, generator: torch.Generator | None = None,
                  dtype: torch.dtype = torch.float32) -> nn.Linear:
    """nn.Linear with its usual uniform init drawn from an explicit generator."""
    layer = nn.Linear(n_in, n_out, dtype=dtype)
    bound = 1.0 / math.sqrt(n_in)
    with torch.no_grad():
        layer.weight.uniform_(-bound, bound, generator=generator)
        layer.bias.uniform_(-bound, bound, generator=generator)
    return layer


class MLP(nn.Module):
    """Plain ReLU MLP; heads apply their own output activations."""

    def __init__(self, dims: list[int], *, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        layers: list[nn.Module] = []
        for i in range(len(dims) - 1):
            layers.append(seeded_linear(dims[i], dims[i + 1], generator=generator, dtype=dtype))
            if i < len(dims) - 2:
                layers.append(nn.ReLU())
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)

    def hidden_layers(self) -> list[nn.Linear]:
        """All linear layers except the output layer."""
        linears = [m for m in self.net if isinstance(m, nn.Linear)]
        return linears[:-1]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs shared by the field networks."""

    density_grid: HashGridConfig = field(default_factory=HashGridConfig)
    color_grid: HashGridConfig = field(default_factory=HashGridConfig)
    hidden: int = 64
    geo_features: int = 15
    sh_degree: int = 4

    def to_dict(self) -> dict:
        return {"density_grid": self.density_grid.to_dict(),
                "color_grid": self.color_grid.to_dict(),
                "hidden": self.hidden, "geo_features": self.geo_features,
                "sh_degree": self.sh_degree}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(density_grid=HashGridConfig.from_dict(d["density_grid"]),
                           color_grid=HashGridConfig.from_dict(d["color_grid"]),
                           hidden=int(d["hidden"]), geo_features=int(d["geo_features"]),
                           sh_degree=int(d["sh_degree"]))


def fixture_model_config() -> ModelConfig:
    """Small networks sized for the CI fixture (128^2 images, CPU training)."""
    grid = HashGridConfig(levels=6, base_resolution=16, max_resolution=128,
                          table_size=2 ** 15, features_per_entry=2)
    return ModelConfig(density_grid=grid, color_grid=grid, hidden=32, geo_features=15)


class RadianceField(nn.Module):
    """Stage-1 field: hash-grid density encoder, density MLP, base color head.

    The density branch is frozen after stage 1; later stages read only the
    density value and the geometry feature vector.
    """

    def __init__(self, config: ModelConfig, *, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        self.density_encoder = HashGrid(config.density_grid, generator=generator, dtype=dtype)
        self.density_mlp = MLP([config.density_grid.output_dim, config.hidden,
                                1 + config.geo_features], generator=generator, dtype=dtype)
        sh_dim = config.sh_degree ** 2
        self.color_head = MLP([config.geo_features + sh_dim, config.hidden, 3],
                              generator=generator, dtype=dtype)

    def eval_density(self, positions: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(N, 3) positions -> ((N,) density, (N, geo) geometry features)."""
        enc = self.density_encoder(positions)
        raw = self.density_mlp(enc)
        sigma = torch.exp(raw[:, 0].clamp(max=15.0)).clamp(max=DENSITY_CLAMP)
        return sigma, raw[:, 1:]

    def eval_color(self, geo: torch.Tensor, directions: torch.Tensor) -> torch.Tensor:
        """View-dependent base color in [0,1]; used only during stage 1."""
        sh = sh_encode(directions, self.config.sh_degree, check_unit=False)
        return torch.sigmoid(self.color_head(torch.cat([geo, sh], dim=-1)))

    def freeze_density(self) -> None:
        for p in itertools.chain(self.density_encoder.parameters(),
                                 self.density_mlp.parameters()):
            p.requires_grad_(False)


@dataclass(frozen=True)
class FieldSnapshot:
    """Immutable copy of one network's parameters with a version id."""

    version: int
    state: Mapping[str, torch.Tensor]

    @staticmethod
    def take(module: nn.Module) -> "FieldSnapshot":
        state = {k: v.detach().clone() for k, v in module.state_dict().items()}
        return FieldSnapshot(next(_SNAPSHOT_VERSIONS), MappingProxyType(state))

    def restore_into(self, module: nn.Module) -> nn.Module:
        module.load_state_dict(dict(self.state))
        return module


def clone_module(module: nn.Module) -> nn.Module:
    """Deep copy used to publish consistent read-only model snapshots."""
    return copy.deepcopy(module)
