"""Reference-image segmentation backends.

The external backend forwards point prompts to an HTTP segmentation service;
the manual backend fills user-drawn polygons. Point prompts include (label 1)
or exclude (label 0) candidate masks, mirroring iterative refinement with
positive/negative clicks.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

import httpx
import numpy as np
from PIL import Image, ImageDraw


class SegmentationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PointPrompt:
    x: float
    y: float
    label: int  # 1 = positive (include), 0 = negative (exclude)


def encode_rle(mask: np.ndarray) -> dict:
    """Row-major binary run-length encoding, starting with the zero run."""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.ravel().astype(np.int8)
    changes = np.flatnonzero(np.diff(flat)) + 1
    boundaries = np.concatenate([[0], changes, [len(flat)]])
    counts = np.diff(boundaries).tolist()
    if len(flat) and flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in rle["counts"]:
        if value:
            flat[pos:pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise SegmentationError("run-length counts do not cover the mask")
    return flat.reshape(h, w)


def _apply_prompts(candidates: list[np.ndarray],
                   prompts: list[PointPrompt]) -> list[np.ndarray]:
    if not prompts:
        return candidates
    selected: list[int] = []
    for p in prompts:
        row, col = int(round(p.y)), int(round(p.x))
        for i, mask in enumerate(candidates):
            if not (0 <= row < mask.shape[0] and 0 <= col < mask.shape[1]):
                continue
            if not mask[row, col]:
                continue
            if p.label == 1 and i not in selected:
                selected.append(i)
            elif p.label == 0 and i in selected:
                selected.remove(i)
    return [candidates[i] for i in selected]


class ManualSegmentationBackend:
    """Polygon-fill masks; returns the full image when no polygons are given."""

    def __init__(self, polygons: list[list[tuple[float, float]]] | None = None):
        self.polygons = polygons or []

    def segment(self, image: np.ndarray, prompts: list[PointPrompt]) -> list[np.ndarray]:
        h, w = image.shape[:2]
        if not self.polygons:
            return [np.ones((h, w), dtype=bool)]
        candidates = []
        for polygon in self.polygons:
            canvas = Image.new("L", (w, h), 0)
            ImageDraw.Draw(canvas).polygon([(float(x), float(y)) for x, y in polygon],
                                           fill=1, outline=1)
            candidates.append(np.asarray(canvas, dtype=bool))
        return _apply_prompts(candidates, prompts)


class HTTPSegmentationBackend:
    """Client for an external segmentation service.

    POST {url}/segment with {"image": base64 PNG, "points": [{x, y, label}]}
    and expect {"masks": [RLE, ...]} back.
    """

    def __init__(self, url: str, *, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def segment(self, image: np.ndarray, prompts: list[PointPrompt]) -> list[np.ndarray]:
        arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        payload = {
            "image": base64.b64encode(buf.getvalue()).decode("ascii"),
            "points": [{"x": p.x, "y": p.y, "label": p.label} for p in prompts],
        }
        try:
            resp = httpx.post(f"{self.url}/segment", json=payload, timeout=self.timeout)
            resp.raise_for_status()
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            raise SegmentationError(
                f"segmentation service unreachable ({exc}); draw manual polygon "
                "masks as a fallback") from exc
        return [decode_rle(rle) for rle in resp.json().get("masks", [])]


def segment_reference(backend, image: np.ndarray,
                      prompts: list[PointPrompt] | list[tuple] | None = None
                      ) -> list[np.ndarray]:
    """Candidate masks for a reference image under the given backend."""
    norm: list[PointPrompt] = []
    for p in prompts or []:
        if isinstance(p, PointPrompt):
            norm.append(p)
        else:
            x, y, label = p
            if isinstance(label, str):
                label = 1 if label == "positive" else 0
            norm.append(PointPrompt(float(x), float(y), int(label)))
    masks = backend.segment(image, norm)
    if not masks:
        raise SegmentationError("segmentation produced no masks")
    return masks
