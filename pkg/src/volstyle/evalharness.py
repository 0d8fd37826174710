"""Cross-view consistency evaluation via flow-based forward warping.

One frame is warped to another along per-pixel flow using softmax splatting
(colliding sources blend with softmax-of-importance weights), and masked MSE /
optional perceptual scores are averaged over adjacent (short-range) and
interval-separated (long-range) view pairs.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cameras import Camera
from .dataset import read_png


class ConsistencyError(ValueError):
    pass


@dataclass
class FlowField:
    """Per-pixel displacement in pixels: flow[..., 0] = dx (cols), [..., 1] = dy."""

    flow: np.ndarray  # (H, W, 2)
    valid: np.ndarray | None = None  # (H, W) bool

    def __post_init__(self) -> None:
        self.flow = np.asarray(self.flow, dtype=np.float64)
        if self.flow.ndim != 3 or self.flow.shape[-1] != 2:
            raise ConsistencyError("flow must have shape (H, W, 2)")
        if self.valid is None:
            self.valid = np.ones(self.flow.shape[:2], dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.flow.shape[:2]:
            raise ConsistencyError("validity mask shape must match flow")


def warp(image: np.ndarray, flow: FlowField,
         importance: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Forward-splat image along flow; returns (warped, coverage mask).

    Each source pixel splats bilinearly around its displaced position with
    weight exp(importance); colliding sources therefore combine with
    softmax(importance) weights. Targets receiving no weight are uncovered.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if flow.flow.shape[:2] != (h, w):
        raise ConsistencyError(f"flow shape {flow.flow.shape[:2]} vs image {(h, w)}")
    if importance is None:
        importance = np.zeros((h, w))
    importance = np.asarray(importance, dtype=np.float64)
    # Stabilize exponentials; a shared shift cancels in the normalization.
    weight0 = np.exp(importance - importance.max())

    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    tx = (cc + flow.flow[..., 0]).ravel()
    ty = (rr + flow.flow[..., 1]).ravel()
    src_w = (weight0 * flow.valid).ravel()
    colors = image.reshape(-1, image.shape[-1])

    num = np.zeros((h * w, image.shape[-1]))
    den = np.zeros(h * w)
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = tx - x0
    fy = ty - y0
    for dy, dx, wgt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                        (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        xs = x0 + dx
        ys = y0 + dy
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        contrib = src_w * wgt
        ok &= contrib > 0
        idx = ys[ok] * w + xs[ok]
        np.add.at(num, idx, contrib[ok, None] * colors[ok])
        np.add.at(den, idx, contrib[ok])
    covered = den > 1e-12
    warped = np.zeros_like(num)
    warped[covered] = num[covered] / den[covered, None]
    return warped.reshape(image.shape), covered.reshape(h, w)


def _photometric_importance(source: np.ndarray, target: np.ndarray,
                            flow: FlowField) -> np.ndarray:
    """Negative forward-warp photometric error as splatting importance."""
    h, w = source.shape[:2]
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    tx = np.clip(cc + flow.flow[..., 0], 0, w - 1)
    ty = np.clip(rr + flow.flow[..., 1], 0, h - 1)
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (tx - x0)[..., None]
    fy = (ty - y0)[..., None]
    sampled = (target[y0, x0] * (1 - fx) * (1 - fy) + target[y0, x1] * fx * (1 - fy)
               + target[y1, x0] * (1 - fx) * fy + target[y1, x1] * fx * fy)
    err = np.abs(source - sampled).sum(axis=-1)
    return -10.0 * err


@dataclass
class PairScore:
    kind: str  # "short" | "long"
    a: int
    b: int
    mse: float
    lpips: float | None = None


@dataclass
class ConsistencyReport:
    short_mse: float
    long_mse: float
    short_lpips: float | None
    long_lpips: float | None
    interval: int
    pairs: list[PairScore] = field(default_factory=list)
    perceptual_available: bool = False

    def to_json(self) -> dict:
        return {
            "short": {"mse": self.short_mse, "lpips": self.short_lpips},
            "long": {"mse": self.long_mse, "lpips": self.long_lpips},
            "interval": self.interval,
            "perceptual_available": self.perceptual_available,
            "pairs": [{"kind": p.kind, "a": p.a, "b": p.b, "mse": p.mse,
                       "lpips": p.lpips} for p in self.pairs],
        }


class ZeroFlowBackend:
    """Identity flow; useful for static sequences and harness checks."""

    def estimate(self, frame_a: np.ndarray, frame_b: np.ndarray,
                 index_a: int, index_b: int) -> FlowField:
        h, w = frame_a.shape[:2]
        return FlowField(np.zeros((h, w, 2)))


class AnalyticSphereFlowBackend:
    """Ground-truth flow for an opaque sphere fixture with known cameras.

    Each source pixel's ray is intersected with the sphere; visible surface
    points are reprojected into the target camera. Pixels that miss the sphere
    keep zero flow (background maps onto background); points facing away from
    the target camera are marked invalid.
    """

    def __init__(self, cameras: list[Camera], center, radius: float):
        self.cameras = cameras
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)

    def estimate(self, frame_a: np.ndarray, frame_b: np.ndarray,
                 index_a: int, index_b: int) -> FlowField:
        from .cameras import all_pixels, generate_rays

        cam_a = self.cameras[index_a]
        cam_b = self.cameras[index_b]
        pixels = all_pixels(cam_a)
        rays = generate_rays(cam_a, pixels)
        oc = rays.origins - self.center
        b_coef = (oc * rays.directions).sum(axis=-1)
        c_coef = (oc * oc).sum(axis=-1) - self.radius ** 2
        disc = b_coef ** 2 - c_coef
        hit = disc > 0
        t = -b_coef - np.sqrt(np.maximum(disc, 0.0))
        hit &= t > 0
        points = rays.origins + rays.directions * t[:, None]

        # Project into the target camera.
        rot = cam_b.pose[:3, :3]
        cam_pts = (points - cam_b.pose[:3, 3]) @ rot  # world -> camera
        in_front = cam_pts[:, 2] < 0
        z = np.where(np.abs(cam_pts[:, 2]) < 1e-9, -1e-9, cam_pts[:, 2])
        px = cam_pts[:, 0] / (-z)
        py = cam_pts[:, 1] / (-z)
        f = cam_b.focal
        col_b = px * f + cam_b.width / 2.0 - 0.5
        row_b = -py * f + cam_b.height / 2.0 - 0.5

        normals = (points - self.center) / self.radius
        facing = ((cam_b.pose[:3, 3] - points) * normals).sum(axis=-1) > 0

        h, w = cam_a.height, cam_a.width
        flow = np.zeros((h * w, 2))
        flow[hit, 0] = col_b[hit] - pixels[hit, 1]
        flow[hit, 1] = row_b[hit] - pixels[hit, 0]
        valid = ~hit | (hit & in_front & facing
                        & (col_b >= 0) & (col_b <= w - 1)
                        & (row_b >= 0) & (row_b <= h - 1))
        return FlowField(flow.reshape(h, w, 2), valid.reshape(h, w))


class HTTPFlowBackend:
    """Client for an external optical-flow service.

    POST {url}/flow with {"image_a": b64 PNG, "image_b": b64 PNG}; the reply
    carries base64-encoded .npy blobs {"flow": ..., "valid": ...}.
    """

    def __init__(self, url: str, *, timeout: float = 60.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def estimate(self, frame_a: np.ndarray, frame_b: np.ndarray,
                 index_a: int, index_b: int) -> FlowField:
        import httpx
        from PIL import Image

        def b64png(img):
            arr = np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)
            buf = io.BytesIO()
            Image.fromarray(arr).save(buf, format="PNG")
            return base64.b64encode(buf.getvalue()).decode("ascii")

        try:
            resp = httpx.post(f"{self.url}/flow",
                              json={"image_a": b64png(frame_a), "image_b": b64png(frame_b)},
                              timeout=self.timeout)
            resp.raise_for_status()
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            raise ConsistencyError(f"flow service unreachable: {exc}") from exc
        body = resp.json()
        flow = np.load(io.BytesIO(base64.b64decode(body["flow"])))
        valid = None
        if body.get("valid"):
            valid = np.load(io.BytesIO(base64.b64decode(body["valid"])))
        return FlowField(flow, valid)


def masked_mse(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    if not mask.any():
        return float("nan")
    diff = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2
    return float(diff[mask].mean())


def consistency(frames: list[np.ndarray], flow_backend, perceptual_backend=None,
                interval: int = 10) -> ConsistencyReport:
    """Short- and long-range cross-view consistency of an ordered sequence."""
    if flow_backend is None:
        raise ConsistencyError("a flow backend is required")
    if len(frames) < interval + 1:
        raise ConsistencyError(f"need at least {interval + 1} frames for interval {interval}")

    pairs: list[PairScore] = []
    for kind, step in (("short", 1), ("long", interval)):
        for a in range(len(frames) - step):
            b = a + step
            flow = flow_backend.estimate(frames[a], frames[b], a, b)
            importance = _photometric_importance(frames[a], frames[b], flow)
            warped, covered = warp(frames[a], flow, importance)
            mask = covered & flow.valid if flow.valid.shape == covered.shape else covered
            mse = masked_mse(warped, frames[b], mask)
            lp = None
            if perceptual_backend is not None:
                lp = float(perceptual_backend(warped, frames[b]))
            pairs.append(PairScore(kind, a, b, mse, lp))

    def mean(kind, attr):
        vals = [getattr(p, attr) for p in pairs if p.kind == kind and getattr(p, attr) is not None]
        return float(np.mean(vals)) if vals else None

    return ConsistencyReport(
        short_mse=mean("short", "mse"), long_mse=mean("long", "mse"),
        short_lpips=mean("short", "lpips"), long_lpips=mean("long", "lpips"),
        interval=interval, pairs=pairs,
        perceptual_available=perceptual_backend is not None)


def load_frames(directory: Path) -> list[np.ndarray]:
    """Numbered PNG frames from a directory, in name order."""
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise ConsistencyError(f"no PNG frames in {directory}")
    return [read_png(p) for p in paths]


def save_report(report: ConsistencyReport, path: Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=1))
