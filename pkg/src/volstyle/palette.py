"""Palette extraction and color-space utilities.

Palette colors are found as the simplified vertices of the RGB convex hull of
the training pixels, then refined in hue-saturation-brightness space: dark
colors are dropped (the lighting branch models them) and near-duplicate hues
are merged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError


class PaletteError(ValueError):
    pass


@dataclass(frozen=True)
class HSBColor:
    hue: float  # [0, 1), circular; 0 for achromatic colors
    saturation: float  # [0, 1]
    brightness: float  # [0, 1]


@dataclass(frozen=True)
class RefineConfig:
    hue_threshold: float = 0.1  # merge colors with circular hue distance below this
    brightness_threshold: float = 0.2  # drop colors darker than this

    def __post_init__(self) -> None:
        if not (0 < self.hue_threshold < 1 and 0 < self.brightness_threshold < 1):
            raise PaletteError("thresholds must lie in (0, 1)")


@dataclass
class Palette:
    colors: np.ndarray  # (N, 3) RGB in [0,1]

    def __post_init__(self) -> None:
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(self.colors) < 1:
            raise PaletteError("palette needs at least one color")

    def __len__(self) -> int:
        return len(self.colors)


def _check_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if np.any(rgb < -1e-9) or np.any(rgb > 1 + 1e-9):
        raise PaletteError("RGB components must lie in [0, 1]")
    return np.clip(rgb, 0.0, 1.0)


def rgb_to_hsb(rgb) -> HSBColor:
    """Standard hexcone HSB; achromatic colors get hue 0."""
    r, g, b = _check_rgb(rgb)
    mx, mn = max(r, g, b), min(r, g, b)
    delta = mx - mn
    if delta == 0:
        hue = 0.0
    elif mx == r:
        hue = ((g - b) / delta) % 6 / 6
    elif mx == g:
        hue = ((b - r) / delta + 2) / 6
    else:
        hue = ((r - g) / delta + 4) / 6
    sat = 0.0 if mx == 0 else delta / mx
    return HSBColor(hue % 1.0, sat, mx)


def hsb_to_rgb(hsb: HSBColor) -> np.ndarray:
    h, s, v = hsb.hue % 1.0, hsb.saturation, hsb.brightness
    c = v * s
    hp = h * 6
    xcomp = c * (1 - abs(hp % 2 - 1))
    sector = int(hp) % 6
    r, g, b = [(c, xcomp, 0), (xcomp, c, 0), (0, c, xcomp),
               (0, xcomp, c), (xcomp, 0, c), (c, 0, xcomp)][sector]
    m = v - c
    return np.array([r + m, g + m, b + m])


def hue_distance(h1: float, h2: float) -> float:
    """Circular distance on the hue circle, in [0, 0.5]."""
    d = abs(h1 - h2) % 1.0
    return min(d, 1.0 - d)


def luminance(rgb) -> float:
    """Perceptual luminance of a display color.

    Components are linearized with a 2.2 exponent before applying the
    standard spectral-sensitivity weights.
    """
    r, g, b = _check_rgb(rgb)
    return float(0.2126 * r ** 2.2 + 0.7152 * g ** 2.2 + 0.0722 * b ** 2.2)


def average_style_color(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean RGB over masked pixels of an (H, W, 3) image."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape[:2]:
        raise PaletteError("mask shape must match image")
    if not mask.any():
        raise PaletteError("mask selects no pixels")
    return np.asarray(image, dtype=np.float64)[mask].mean(axis=0)


# --- convex hull extraction ------------------------------------------------

def _hull_planes(hull: ConvexHull) -> tuple[np.ndarray, np.ndarray]:
    """Outward face normals n and offsets d with n.x <= d inside."""
    eq = hull.equations  # n.x + off <= 0 inside
    return eq[:, :3], -eq[:, 3]


def _contraction_candidate(points: np.ndarray, hull: ConvexHull,
                           a: int, b: int) -> tuple[np.ndarray, float, bool] | None:
    """Optimal replacement vertex for contracting edge (a, b).

    The new vertex must lie outside every face touching a or b so the new hull
    still encloses the old one; among those points we minimize the (linear)
    added pyramid volume. The optimum sits where three face planes meet, so we
    enumerate plane triples in one batched solve. Returns (vertex, added
    volume, stayed-in-gamut flag).
    """
    from itertools import combinations

    normals, offsets = _hull_planes(hull)
    touching = np.array([i for i, simplex in enumerate(hull.simplices)
                         if a in simplex or b in simplex])
    if len(touching) == 0:
        return None
    n = normals[touching]
    d = offsets[touching]
    tri = points[hull.simplices[touching]]  # (k, 3, 3)
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=-1)
    grad = (areas[:, None] * n).sum(axis=0) / 3.0  # linear objective coefficient

    # Candidate planes: the faces being removed plus the RGB cube walls, so
    # optima never leave the valid color gamut. The cube walls also join the
    # feasibility constraints.
    box_n = np.vstack([np.eye(3), -np.eye(3)])
    box_d = np.array([0.0, 0.0, 0.0, -1.0, -1.0, -1.0])
    all_n = np.vstack([n, box_n])
    all_d = np.concatenate([d, box_d])

    k = len(all_n)
    triples = np.array(list(combinations(range(k), 3)))
    mats = all_n[triples]  # (T, 3, 3)
    rhs = all_d[triples]  # (T, 3)
    dets = np.linalg.det(mats)
    ok = np.abs(dets) > 1e-12
    if not ok.any():
        return None
    cands = np.full((len(triples), 3), np.nan)
    cands[ok] = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    in_box = ok & np.all(cands @ all_n.T >= all_d[None, :] - 1e-9, axis=1)
    feasible = in_box
    if not feasible.any():  # no box-compatible optimum; allow leaving the box
        feasible = ok & np.all(cands @ n.T >= d[None, :] - 1e-9, axis=1) \
            & np.all(np.abs(cands) <= 10.0, axis=1)
        if not feasible.any():
            return None
    added = cands @ grad - (areas * d).sum() / 3.0
    added[~feasible] = np.inf
    best = int(np.argmin(added))
    return cands[best], float(added[best]), bool(in_box[best])


def _simplify_hull(vertices: np.ndarray, max_colors: int) -> np.ndarray:
    """Iterative edge contraction, each step choosing the cheapest edge."""
    verts = vertices.copy()
    while len(verts) > max_colors:
        try:
            hull = ConvexHull(verts)
        except QhullError:
            break
        verts = verts[hull.vertices]
        if len(verts) <= max_colors:
            break
        hull = ConvexHull(verts)
        edges = set()
        for simplex in hull.simplices:
            for i in range(3):
                e = (simplex[i], simplex[(i + 1) % 3])
                edges.add((min(e), max(e)))
        # Prefer contractions that keep the vertex inside the color gamut.
        best: dict[bool, tuple[float, tuple[int, int], np.ndarray]] = {}
        for (a, b) in edges:
            cand = _contraction_candidate(verts, hull, a, b)
            if cand is None:
                continue
            point, cost, in_box = cand
            if in_box not in best or cost < best[in_box][0]:
                best[in_box] = (cost, (a, b), point)
        choice = best.get(True) or best.get(False)
        if choice is None:  # no contractible edge; drop least-extreme vertex
            centroid = verts.mean(axis=0)
            verts = np.delete(verts, np.argmin(np.linalg.norm(verts - centroid, axis=1)), axis=0)
            continue
        _, best_edge, best_point = choice
        keep = [i for i in range(len(verts)) if i not in best_edge]
        verts = np.vstack([verts[keep], best_point])
    return verts


def extract_convex_hull_palette(images: list[np.ndarray], max_colors: int = 8,
                                *, subsample: int = 100_000, seed: int = 0) -> np.ndarray:
    """Simplified RGB convex hull vertices of the given images' pixels.

    Returns (N, 3) colors with N <= max_colors, clamped to [0,1]^3. A
    degenerate pixel cloud (rank < 3) falls back to its unique colors.
    """
    if not images:
        raise PaletteError("need at least one image")
    if max_colors < 4:
        raise PaletteError("max_colors must be at least 4")
    pixels = np.concatenate([np.asarray(im, dtype=np.float64).reshape(-1, 3)
                             for im in images], axis=0)
    if len(pixels) > subsample:
        rng = np.random.default_rng(seed)
        pixels = pixels[rng.choice(len(pixels), subsample, replace=False)]

    uniq = np.unique(np.round(pixels, 6), axis=0)
    if len(uniq) <= max_colors:
        return np.clip(uniq, 0.0, 1.0)
    try:
        hull = ConvexHull(pixels)
    except QhullError:
        # Degenerate (coplanar/collinear) cloud: represent by extreme colors.
        order = np.argsort(pixels.sum(axis=1))
        picks = pixels[order[np.linspace(0, len(order) - 1, max_colors).astype(int)]]
        return np.clip(np.unique(picks, axis=0), 0.0, 1.0)
    verts = _simplify_hull(pixels[hull.vertices], max_colors)
    return np.clip(verts, 0.0, 1.0)


def refine_palette(colors: np.ndarray, config: RefineConfig = RefineConfig()) -> Palette:
    """Drop dark colors, then merge near-duplicate hues.

    When two colors are closer than the hue threshold the higher-saturation
    member survives (ties keep the earlier color). Raises if nothing survives.
    """
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if len(colors) == 0:
        raise PaletteError("empty palette input")
    hsb = [rgb_to_hsb(c) for c in colors]
    keep = [i for i, c in enumerate(hsb) if c.brightness >= config.brightness_threshold]
    survivors = list(keep)
    changed = True
    while changed:
        changed = False
        for ii in range(len(survivors)):
            for jj in range(ii + 1, len(survivors)):
                a, b = survivors[ii], survivors[jj]
                if hue_distance(hsb[a].hue, hsb[b].hue) < config.hue_threshold:
                    drop = b if hsb[a].saturation >= hsb[b].saturation else a
                    survivors.remove(drop)
                    changed = True
                    break
            if changed:
                break
    if not survivors:
        raise PaletteError(
            "refinement removed every color; lower the thresholds or supply "
            "palette colors manually")
    return Palette(colors[survivors])
