"""Per-region style optimization of the unrestricted color network.

Each training step renders every stylized region separately (samples classified
to other regions contribute no density) onto that style's luminance-gray
background, evaluates the nearest-neighbor feature matching loss against the
style's features via deferred backpropagation, and updates only the
unrestricted network. There is no content loss; geometry, palette network and
lighting stay frozen, and the specular term is re-added at inference.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch

from ..cameras import sphere_cameras
from ..palette import average_style_color, luminance
from ..rendering import SceneModels, field_fn_for_mode, render_pixels
from .deferred import deferred_backprop
from .features import FeatureExtractor, resize_long_side
from .nnfm import nearest_cosine_distances


class StylizeError(RuntimeError):
    pass


@dataclass
class StyleRegion:
    """One reference style: an image and the mask selecting the style area."""

    image: np.ndarray  # (H, W, 3) float in [0,1]
    mask: np.ndarray | None = None  # (H, W) bool; None = whole image

    def __post_init__(self) -> None:
        self.image = np.asarray(self.image, dtype=np.float32)
        if self.mask is None:
            self.mask = np.ones(self.image.shape[:2], dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.image.shape[:2]:
            raise StylizeError("style mask shape must match its image")
        if not self.mask.any():
            raise StylizeError("style mask selects no pixels")

    def bounding_crop(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.flatnonzero(self.mask.any(axis=1))
        cols = np.flatnonzero(self.mask.any(axis=0))
        r0, r1 = rows[0], rows[-1] + 1
        c0, c1 = cols[0], cols[-1] + 1
        return self.image[r0:r1, c0:c1], self.mask[r0:r1, c0:c1]

    def mean_color(self) -> np.ndarray:
        return average_style_color(self.image, self.mask)

    def background(self) -> np.ndarray:
        lum = luminance(np.clip(self.mean_color(), 0.0, 1.0))
        return np.array([lum, lum, lum])


@dataclass
class StyleAssignment:
    """Styles plus the palette-index -> style-index mapping.

    A mapping value of None marks a region that keeps its original palette
    appearance (partial stylization); every palette index must appear.
    """

    styles: list[StyleRegion]
    mapping: dict[int, int | None]

    def validate(self, n_palette: int) -> None:
        missing = [i for i in range(n_palette) if i not in self.mapping]
        if missing:
            raise StylizeError(f"style assignment missing palette indices {missing}")
        for i, s in self.mapping.items():
            if s is not None and not 0 <= s < len(self.styles):
                raise StylizeError(f"palette {i} maps to unknown style {s}")

    def stylized_indices(self) -> list[int]:
        return sorted(i for i, s in self.mapping.items() if s is not None)

    def style_means(self) -> dict[int, np.ndarray]:
        return {i: self.styles[s].mean_color()
                for i, s in self.mapping.items() if s is not None}

    @staticmethod
    def random(styles: list[StyleRegion], n_palette: int, seed: int = 0) -> "StyleAssignment":
        """Seeded random fallback when the user does not pick a mapping."""
        rng = np.random.default_rng(seed)
        mapping = {i: int(rng.integers(0, len(styles))) for i in range(n_palette)}
        return StyleAssignment(styles, mapping)


@dataclass(frozen=True)
class NPSEConfig:
    iterations: int = 210
    views: int = 42  # uniformly placed cameras, visited round-robin
    learning_rate: float = 0.01  # fixed, no decay
    tile_size: int = 64
    resolution: int = 128
    n_samples: int = 48
    camera_radius: float = 1.4
    fov_x: float = 0.9
    style_long_side: int = 512
    seed: int = 0


def style_feature_vectors(style: StyleRegion, extractor: FeatureExtractor,
                          *, long_side: int = 512) -> torch.Tensor:
    """Feature vectors of the style crop restricted to the mask."""
    crop, mask = style.bounding_crop()
    crop = resize_long_side(crop, long_side)
    if mask.shape != crop.shape[:2]:
        from PIL import Image
        mask = np.asarray(Image.fromarray(mask.astype(np.uint8) * 255)
                          .resize((crop.shape[1], crop.shape[0]), Image.NEAREST)) > 127
    h4, w4 = (crop.shape[0] // 4) * 4, (crop.shape[1] // 4) * 4
    if h4 < 4 or w4 < 4:
        raise StylizeError("style crop too small for feature extraction")
    crop, mask = crop[:h4, :w4], mask[:h4, :w4]
    with torch.no_grad():
        fmap = extractor(torch.as_tensor(crop, dtype=torch.float32))
    coverage = mask.reshape(h4 // 4, 4, w4 // 4, 4).mean(axis=(1, 3))
    keep = torch.as_tensor(coverage.ravel() > 0.25)
    vectors = fmap.vectors()
    if not bool(keep.any()):
        return vectors
    return vectors[keep]


def stylize(models: SceneModels, assignment: StyleAssignment,
            extractor: FeatureExtractor, config: NPSEConfig = NPSEConfig(),
            *, on_iter=None) -> SceneModels:
    """Optimize the unrestricted network toward the assigned styles.

    Requires a distilled scene. The pre-stylization network state is kept on
    the bundle so stylization can be reset.
    """
    if not models.at_least("distilled"):
        raise StylizeError("stylization requires a distilled scene: distill required")
    assignment.validate(models.n_palette)
    stylized = assignment.stylized_indices()
    if models.pre_style_ucn is None:
        models.pre_style_ucn = copy.deepcopy(models.ucn.state_dict())

    for p in models.base.parameters():
        p.requires_grad_(False)
    for p in models.pcn.parameters():
        p.requires_grad_(False)
    for p in models.ucn.parameters():
        p.requires_grad_(True)

    style_vectors = {i: style_feature_vectors(assignment.styles[s], extractor,
                                              long_side=config.style_long_side)
                     for i, s in assignment.mapping.items() if s is not None}
    backgrounds = {i: assignment.styles[s].background()
                   for i, s in assignment.mapping.items() if s is not None}
    cameras = sphere_cameras(config.views, config.camera_radius, config.fov_x,
                             config.resolution, config.resolution)
    optimizer = torch.optim.Adam(models.ucn.parameters(), lr=config.learning_rate)

    res = config.resolution
    pixel_grid = np.stack(np.meshgrid(np.arange(res), np.arange(res), indexing="ij"),
                          axis=-1)  # (res, res, 2) of (row, col)

    for it in range(config.iterations):
        camera = cameras[it % len(cameras)]
        optimizer.zero_grad()
        total = 0.0
        for i in stylized:
            field_fn = field_fn_for_mode(models, "region", region=i)
            background = backgrounds[i]
            target = style_vectors[i]

            def render_tile(r0, r1, c0, c1):
                pixels = pixel_grid[r0:r1, c0:c1].reshape(-1, 2)
                pix, _ = render_pixels(models, camera, pixels, "region", background,
                                       region=i, n_samples=config.n_samples,
                                       field_fn=field_fn)
                return pix.clamp(0.0, 1.0).reshape(r1 - r0, c1 - c0, 3)

            def loss_on_image(image):
                vectors = extractor(image).vectors()
                dists = nearest_cosine_distances(vectors, target)
                return dists.sum() / (len(vectors) * len(stylized))

            loss_val, _ = deferred_backprop(render_tile, loss_on_image, res, res,
                                            tile_size=config.tile_size)
            total += loss_val
        optimizer.step()
        if on_iter is not None:
            on_iter({"iter": it, "loss": total})

    models.stylized = set(stylized)
    models.stage = "stylized"
    return models


def reset_stylization(models: SceneModels) -> SceneModels:
    """Restore the pre-stylization unrestricted network (training reset)."""
    if models.pre_style_ucn is None:
        raise StylizeError("nothing to reset: no stylization has run")
    models.ucn.load_state_dict(models.pre_style_ucn)
    models.stylized = set()
    models.stage = "distilled"
    return models
