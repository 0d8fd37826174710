"""Scene datasets: posed multi-view images with a manifest on disk.

Manifest layout (one JSON file, the de-facto synthetic-scene convention):

    {"camera_angle_x": float, "background": [r, g, b],
     "split": {"train": [...], "held_out": [...]},
     "frames": [{"file_path": "images/frame_000.png",
                 "transform_matrix": [[...4x4 row-major...]]}]}

Images are 8-bit PNGs decoded to float RGB via division by 255 with no gamma
transform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .cameras import Camera, CameraError


class DatasetError(ValueError):
    pass


@dataclass
class SceneDataset:
    frames: list[tuple[np.ndarray, Camera]]  # (H, W, 3) float32 in [0,1] each
    background: np.ndarray  # (3,)
    train_indices: list[int]
    heldout_indices: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.frames:
            raise DatasetError("dataset has no frames")
        shapes = {im.shape for im, _ in self.frames}
        if len(shapes) != 1:
            raise DatasetError(f"mixed image resolutions: {sorted(shapes)}")
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)

    @property
    def image_shape(self) -> tuple[int, int]:
        h, w, _ = self.frames[0][0].shape
        return h, w

    def train_frames(self) -> list[tuple[np.ndarray, Camera]]:
        return [self.frames[i] for i in self.train_indices]

    def heldout_frames(self) -> list[tuple[np.ndarray, Camera]]:
        return [self.frames[i] for i in self.heldout_indices]


def write_png(path: Path, image: np.ndarray) -> None:
    """Store a float [0,1] image as 8-bit PNG (atomic write)."""
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    tmp = path.with_suffix(".tmp.png")
    Image.fromarray(arr).save(tmp, format="PNG")
    tmp.replace(path)


def read_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def quantize_like_png(image: np.ndarray) -> np.ndarray:
    """Round-trip a float image through 8-bit quantization."""
    return (np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
            .astype(np.float32) / 255.0)


def save_dataset(dataset: SceneDataset, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    frames_json = []
    for i, (image, camera) in enumerate(dataset.frames):
        rel = f"images/frame_{i:03d}.png"
        write_png(out_dir / rel, image)
        frames_json.append({"file_path": rel,
                            "transform_matrix": camera.pose.tolist()})
    manifest = {
        "camera_angle_x": dataset.frames[0][1].fov_x,
        "background": dataset.background.tolist(),
        "split": {"train": dataset.train_indices, "held_out": dataset.heldout_indices},
        "frames": frames_json,
    }
    path = out_dir / "manifest.json"
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=1))
    tmp.replace(path)
    return path


def load_dataset(manifest_path: Path) -> SceneDataset:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    frames_json = manifest.get("frames", [])
    if not frames_json:
        raise DatasetError("manifest lists no frames")
    fov_x = float(manifest["camera_angle_x"])
    root = manifest_path.parent

    frames: list[tuple[np.ndarray, Camera]] = []
    for i, fr in enumerate(frames_json):
        img_path = root / fr["file_path"]
        if not img_path.exists():
            raise DatasetError(f"frame {i}: image file missing: {img_path}")
        image = read_png(img_path)
        pose = np.asarray(fr["transform_matrix"], dtype=np.float64)
        rot = pose[:3, :3]
        if np.linalg.det(rot) < 0:
            raise DatasetError(f"frame {i}: pose rotation has determinant -1")
        try:
            camera = Camera(pose, fov_x, image.shape[1], image.shape[0])
        except CameraError as exc:
            raise DatasetError(f"frame {i}: {exc}") from exc
        frames.append((image, camera))

    split = manifest.get("split", {})
    train = [int(i) for i in split.get("train", range(len(frames)))]
    heldout = [int(i) for i in split.get("held_out", [])]
    background = np.asarray(manifest.get("background", [0, 0, 0]), dtype=np.float64)
    return SceneDataset(frames, background, train, heldout)
