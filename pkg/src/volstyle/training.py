"""Stage-1 optimization of the base radiance field, plus shared training plumbing."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .cameras import all_pixels, generate_rays
from .dataset import SceneDataset
from .fields import ModelConfig, RadianceField
from .rendering import trace_rays


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 30000
    learning_rate: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    batch_rays: int = 4096
    lr_decay: bool = True
    seed: int = 0
    n_samples: int = 64  # ray samples per training ray
    lr_final_ratio: float = 0.01  # exponential decay endpoint as a fraction of lr

    def __post_init__(self) -> None:
        if self.iterations < 0 or self.batch_rays < 1 or self.n_samples < 1:
            raise ValueError("iteration/batch/sample counts must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        b1, b2 = self.adam_betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")

    def lr_at(self, iteration: int) -> float:
        """Exponential decay toward zero across the schedule."""
        if not self.lr_decay or self.iterations <= 1:
            return self.learning_rate
        frac = iteration / (self.iterations - 1)
        return self.learning_rate * self.lr_final_ratio ** frac


@dataclass
class RayPool:
    """All training rays and their ground-truth colors, precomputed."""

    origins: torch.Tensor  # (N, 3)
    directions: torch.Tensor  # (N, 3)
    near: torch.Tensor  # (N,)
    far: torch.Tensor  # (N,)
    colors: torch.Tensor  # (N, 3)

    @staticmethod
    def from_dataset(dataset: SceneDataset, *, dtype: torch.dtype = torch.float32) -> "RayPool":
        origins, dirs, nears, fars, colors = [], [], [], [], []
        for image, camera in dataset.train_frames():
            rays = generate_rays(camera, all_pixels(camera))
            origins.append(rays.origins)
            dirs.append(rays.directions)
            nears.append(rays.near)
            fars.append(rays.far)
            colors.append(np.asarray(image, dtype=np.float64).reshape(-1, 3))
        return RayPool(
            torch.as_tensor(np.concatenate(origins), dtype=dtype),
            torch.as_tensor(np.concatenate(dirs), dtype=dtype),
            torch.as_tensor(np.concatenate(nears), dtype=dtype),
            torch.as_tensor(np.concatenate(fars), dtype=dtype),
            torch.as_tensor(np.concatenate(colors), dtype=dtype),
        )

    def __len__(self) -> int:
        return len(self.origins)

    def batch(self, rng: np.random.Generator, count: int):
        idx = torch.as_tensor(rng.integers(0, len(self), size=count))
        return (self.origins[idx], self.directions[idx], self.near[idx],
                self.far[idx], self.colors[idx])


def base_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over rays of the squared L2 color error."""
    return ((pred - target) ** 2).sum(dim=-1).mean()


def train_base(dataset: SceneDataset, config: TrainConfig,
               model_config: ModelConfig | None = None, *, on_iter=None,
               dtype: torch.dtype = torch.float32) -> RadianceField:
    """Fit density and base color to the training images.

    Batches are drawn uniformly over all train pixels with replacement from a
    seeded generator; the loss is the squared error between predicted and
    ground-truth ray colors, composited over the dataset background.
    """
    if not dataset.train_indices:
        raise TrainingError("dataset has an empty train split")
    model_config = model_config or ModelConfig()
    generator = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    field = RadianceField(model_config, generator=generator, dtype=dtype)
    pool = RayPool.from_dataset(dataset, dtype=dtype)
    background = torch.as_tensor(dataset.background, dtype=dtype)

    def field_fn(pts, dirs):
        sigma, geo = field.eval_density(pts)
        return sigma, field.eval_color(geo, dirs), {}

    optimizer = torch.optim.Adam(field.parameters(), lr=config.learning_rate,
                                 betas=config.adam_betas)
    for it in range(config.iterations):
        t_start = time.perf_counter()
        origins, dirs, near, far, target = pool.batch(rng, config.batch_rays)
        for group in optimizer.param_groups:
            group["lr"] = config.lr_at(it)
        optimizer.zero_grad()
        pred, _, _ = trace_rays(field_fn, origins, dirs, near, far,
                                config.n_samples, background,
                                stratified=True, generator=generator)
        loss = base_loss(pred, target)
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at iteration {it}: loss={float(loss)}, "
                f"pred range [{float(pred.min())}, {float(pred.max())}], "
                f"target range [{float(target.min())}, {float(target.max())}]")
        loss.backward()
        optimizer.step()
        if on_iter is not None:
            on_iter({"iter": it, "loss": float(loss.detach()),
                     "wall_ms": (time.perf_counter() - t_start) * 1e3})
    return field


def train_pcn(dataset: SceneDataset, base: RadianceField, palette_init: np.ndarray,
              config: TrainConfig, *, lambda_offset: float = 0.1, on_iter=None,
              dtype: torch.dtype = torch.float32) -> "PCNModel":
    """Fit the palette color network against the frozen base field.

    The density branch stays fixed; palette colors, palette MLP, palette
    encoder and lighting MLP are optimized under the reconstruction loss plus
    an L2 penalty on the per-sample color offsets (weight lambda_offset). The
    lighting branch starts from the base color head's hidden layers.
    """
    from .pcn import PCNModel, eval_pcn

    if not dataset.train_indices:
        raise TrainingError("dataset has an empty train split")
    palette_init = np.asarray(palette_init, dtype=np.float64).reshape(-1, 3)
    if len(palette_init) == 0:
        raise ValueError("palette_init must contain at least one color")
    generator = torch.Generator().manual_seed(config.seed + 1)
    rng = np.random.default_rng(config.seed + 1)
    base.freeze_density()
    for p in base.parameters():
        p.requires_grad_(False)
    pcn = PCNModel(base.config, palette_init, generator=generator, dtype=dtype)
    pcn.warm_start_lighting(base)
    pool = RayPool.from_dataset(dataset, dtype=dtype)
    background = torch.as_tensor(dataset.background, dtype=dtype)

    def field_fn(pts, dirs):
        with torch.no_grad():
            sigma, geo = base.eval_density(pts)
        out = eval_pcn(pcn, pts, dirs, None, geo=geo)
        return sigma, out["color"], out

    optimizer = torch.optim.Adam(pcn.parameters(), lr=config.learning_rate,
                                 betas=config.adam_betas)
    for it in range(config.iterations):
        t_start = time.perf_counter()
        origins, dirs, near, far, target = pool.batch(rng, config.batch_rays)
        for group in optimizer.param_groups:
            group["lr"] = config.lr_at(it)
        optimizer.zero_grad()
        pred, _, extras = trace_rays(field_fn, origins, dirs, near, far,
                                     config.n_samples, background,
                                     stratified=True, generator=generator)
        recon = base_loss(pred, target)
        reg = extras["offsets"].square().sum() / config.batch_rays \
            if "offsets" in extras else pred.new_zeros(())
        loss = recon + lambda_offset * reg
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at iteration {it}: recon={float(recon)}, "
                f"offset reg={float(reg)}")
        loss.backward()
        optimizer.step()
        if on_iter is not None:
            on_iter({"iter": it, "loss": float(loss.detach()), "recon": float(recon.detach()),
                     "wall_ms": (time.perf_counter() - t_start) * 1e3})
    return pcn


def heldout_psnr(models, dataset: SceneDataset, mode: str, *, n_samples: int = 64) -> float:
    """Mean PSNR of re-rendered held-out (or train, if no split) frames."""
    from .rendering import render_view

    frames = dataset.heldout_frames() or dataset.train_frames()
    scores = []
    for image, camera in frames:
        render = render_view(models, camera, mode, dataset.background,
                             n_samples=n_samples)
        scores.append(psnr(render, image))
    return float(np.mean(scores))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0,1]; inf when equal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)
