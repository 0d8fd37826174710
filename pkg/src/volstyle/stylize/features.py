"""Convolutional feature extraction for style losses.

Features come from the third convolutional block of a VGG-16-shaped stack
(conv1_1 .. conv3_3 with max-pools after blocks 1 and 2; output taken after
the block's final rectified activation, so spatial dims are input/4). Weights
load from the tensor-archive format; a "reduced" variant with the same
topology but narrow channels serves tests and CPU-only runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..checkpoints import load_archive, save_archive

# (name, in_channels, out_channels) per conv layer; "pool" entries downsample.
_VGG16_CONV3 = [
    ("conv1_1", 3, 64), ("conv1_2", 64, 64), "pool",
    ("conv2_1", 64, 128), ("conv2_2", 128, 128), "pool",
    ("conv3_1", 128, 256), ("conv3_2", 256, 256), ("conv3_3", 256, 256),
]
_REDUCED_CONV3 = [
    ("conv1_1", 3, 8), ("conv1_2", 8, 8), "pool",
    ("conv2_1", 8, 16), ("conv2_2", 16, 16), "pool",
    ("conv3_1", 16, 32), ("conv3_2", 32, 32), ("conv3_3", 32, 32),
]
_ARCHITECTURES = {"vgg16": _VGG16_CONV3, "reduced": _REDUCED_CONV3}

_NORMALIZE_MEAN = (0.485, 0.456, 0.406)
_NORMALIZE_STD = (0.229, 0.224, 0.225)


class FeatureArchiveError(ValueError):
    pass


@dataclass
class FeatureMap:
    """Spatial feature grid; vectors() flattens to (N_F, channels)."""

    grid: torch.Tensor  # (C, h, w)

    @property
    def channels(self) -> int:
        return self.grid.shape[0]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.grid.shape[1], self.grid.shape[2]

    def vectors(self) -> torch.Tensor:
        c = self.grid.shape[0]
        return self.grid.reshape(c, -1).T


class FeatureExtractor(nn.Module):
    def __init__(self, architecture: str = "vgg16"):
        super().__init__()
        if architecture not in _ARCHITECTURES:
            raise FeatureArchiveError(f"unknown architecture '{architecture}'")
        self.architecture = architecture
        self.convs = nn.ModuleDict()
        for entry in _ARCHITECTURES[architecture]:
            if entry == "pool":
                continue
            name, cin, cout = entry
            self.convs[name] = nn.Conv2d(cin, cout, 3, padding=1)
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def feature_dim(self) -> int:
        last = _ARCHITECTURES[self.architecture][-1]
        return last[2]

    def forward(self, image: torch.Tensor) -> FeatureMap:
        """(H, W, 3) image in [0,1] -> FeatureMap; differentiable in the input."""
        mean = torch.as_tensor(_NORMALIZE_MEAN, dtype=image.dtype)
        std = torch.as_tensor(_NORMALIZE_STD, dtype=image.dtype)
        x = ((image - mean) / std).permute(2, 0, 1)[None]  # (1, 3, H, W)
        for entry in _ARCHITECTURES[self.architecture]:
            if entry == "pool":
                x = F.max_pool2d(x, 2)
            else:
                x = F.relu(self.convs[entry[0]](x))
        return FeatureMap(x[0])

    def seed_weights(self, seed: int) -> None:
        """Deterministic random conv weights scaled to keep activations bounded."""
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for conv in self.convs.values():
                fan_in = conv.in_channels * 9
                bound = (2.0 / fan_in) ** 0.5
                conv.weight.normal_(0.0, bound, generator=generator)
                conv.bias.zero_()


def save_extractor_archive(extractor: FeatureExtractor, path: Path) -> None:
    tensors = {}
    for name, conv in extractor.convs.items():
        tensors[f"features.{name}.weight"] = conv.weight.detach().numpy()
        tensors[f"features.{name}.bias"] = conv.bias.detach().numpy()
    save_archive(path, tensors, {"architecture": extractor.architecture,
                                 "normalize_mean": list(_NORMALIZE_MEAN),
                                 "normalize_std": list(_NORMALIZE_STD)})


def write_reduced_extractor_archive(path: Path, *, seed: int = 0) -> FeatureExtractor:
    """Create and persist the reduced extractor used by tests and CPU runs."""
    extractor = FeatureExtractor("reduced")
    extractor.seed_weights(seed)
    save_extractor_archive(extractor, path)
    return extractor


def load_feature_extractor(path: Path) -> FeatureExtractor:
    tensors, meta = load_archive(path)
    extractor = FeatureExtractor(meta.get("architecture", "vgg16"))
    with torch.no_grad():
        for name, conv in extractor.convs.items():
            for part, param in (("weight", conv.weight), ("bias", conv.bias)):
                key = f"features.{name}.{part}"
                if key not in tensors:
                    raise FeatureArchiveError(f"weights archive is missing tensor '{key}'")
                arr = tensors[key]
                if tuple(arr.shape) != tuple(param.shape):
                    raise FeatureArchiveError(
                        f"tensor '{key}' has shape {tuple(arr.shape)}, expected "
                        f"{tuple(param.shape)}")
                param.copy_(torch.as_tensor(arr))
    return extractor


def export_vgg16_archive(path: Path) -> None:
    """Convert torchvision's pretrained VGG-16 weights into an archive.

    Optional: requires torchvision weights to be available locally.
    """
    from torchvision.models import vgg16

    model = vgg16(weights="IMAGENET1K_V1")
    extractor = FeatureExtractor("vgg16")
    conv_order = [e[0] for e in _VGG16_CONV3 if e != "pool"]
    src = [m for m in model.features if isinstance(m, nn.Conv2d)][:len(conv_order)]
    with torch.no_grad():
        for name, conv in zip(conv_order, src):
            extractor.convs[name].weight.copy_(conv.weight)
            extractor.convs[name].bias.copy_(conv.bias)
    save_extractor_archive(extractor, path)


def resize_long_side(image: np.ndarray, max_side: int = 512) -> np.ndarray:
    """Downscale so the long side is at most max_side (no-op when smaller)."""
    from PIL import Image

    h, w = image.shape[:2]
    long_side = max(h, w)
    if long_side <= max_side:
        return image
    scale = max_side / long_side
    new = (max(1, int(round(w * scale))), max(1, int(round(h * scale))))
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    out = Image.fromarray(arr).resize(new, Image.BILINEAR)
    return np.asarray(out, dtype=np.float32) / 255.0
