from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volstyle.palette import (HSBColor, Palette, PaletteError, RefineConfig,
                              average_style_color, extract_convex_hull_palette,
                              hsb_to_rgb, hue_distance, luminance, refine_palette,
                              rgb_to_hsb)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_primary_red():
    hsb = rgb_to_hsb([1.0, 0.0, 0.0])
    assert hsb.hue == 0.0 and hsb.saturation == 1.0 and hsb.brightness == 1.0


def test_achromatic_gray():
    hsb = rgb_to_hsb([0.5, 0.5, 0.5])
    assert hsb.hue == 0.0 and hsb.saturation == 0.0 and hsb.brightness == 0.5


def test_out_of_range_rejected():
    with pytest.raises(PaletteError):
        rgb_to_hsb([1.2, 0.0, 0.0])


@settings(max_examples=300, deadline=None)
@given(unit, unit, unit)
def test_round_trip(r, g, b):
    rgb = np.array([r, g, b])
    back = hsb_to_rgb(rgb_to_hsb(rgb))
    assert np.max(np.abs(back - rgb)) < 1e-6


@settings(max_examples=200, deadline=None)
@given(unit, unit, unit)
def test_hue_metric_properties(h1, h2, h3):
    assert hue_distance(h1, h2) == pytest.approx(hue_distance(h2, h1))
    assert hue_distance(h1, h2) <= 0.5 + 1e-12
    assert (hue_distance(h1, h3)
            <= hue_distance(h1, h2) + hue_distance(h2, h3) + 1e-12)


def test_hue_wraps_around():
    assert hue_distance(0.99, 0.01) == pytest.approx(0.02)


def test_luminance_values():
    assert luminance([1, 1, 1]) == pytest.approx(1.0)
    assert luminance([0, 0, 0]) == 0.0
    assert luminance([1, 0, 0]) == pytest.approx(0.2126)


@settings(max_examples=100, deadline=None)
@given(unit, unit, unit, st.floats(0.0, 0.3))
def test_luminance_monotone(r, g, b, bump):
    base = luminance([r, g, b])
    for ch in range(3):
        col = np.array([r, g, b])
        col[ch] = min(1.0, col[ch] + bump)
        assert luminance(col) >= base - 1e-12


# --- hull extraction ---------------------------------------------------------

def test_four_color_image_recovers_vertices():
    colors = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    rng = np.random.default_rng(0)
    image = colors[rng.integers(0, 4, size=(64, 64))]
    out = extract_convex_hull_palette([image], max_colors=8)
    assert len(out) == 4
    for c in colors:
        assert np.min(np.linalg.norm(out - c, axis=1)) < 1e-9


def test_uniform_image_degenerates_to_single_color():
    image = np.full((16, 16, 3), 0.42)
    out = extract_convex_hull_palette([image], max_colors=4)
    assert out.shape == (1, 3)
    assert np.allclose(out[0], 0.42)


def test_max_colors_floor():
    image = np.zeros((4, 4, 3))
    with pytest.raises(PaletteError):
        extract_convex_hull_palette([image], max_colors=3)


def test_simplified_hull_contains_pixels():
    # Blob-shaped cloud: Dirichlet mixtures of five anchor colors plus noise
    # (image pixel clouds are blobs, not space-filling cubes).
    rng = np.random.default_rng(1)
    anchors = np.array([
        [0.15, 0.12, 0.1], [0.85, 0.2, 0.15], [0.2, 0.8, 0.25],
        [0.25, 0.3, 0.85], [0.8, 0.75, 0.7]])
    weights = rng.dirichlet(np.full(5, 0.5), size=100_000)
    pixels = weights @ anchors + rng.normal(0, 0.01, size=(100_000, 3))
    pixels = np.clip(pixels, 0.0, 1.0)
    image = pixels.reshape(200, 500, 3)

    out = extract_convex_hull_palette([image], max_colors=6, seed=2)
    assert len(out) <= 6

    from scipy.spatial import ConvexHull, Delaunay
    centroid = out.mean(axis=0)
    inflated = centroid + (out - centroid) * 1.02
    tri = Delaunay(inflated)
    inside = tri.find_simplex(pixels) >= 0
    assert inside.all(), f"{(~inside).sum()} pixels escaped the inflated hull"


# --- refinement --------------------------------------------------------------

def equal_sb(hues, s=0.8, b=0.9):
    return np.array([hsb_to_rgb(HSBColor(h, s, b)) for h in hues])


def test_near_duplicate_hues_merged():
    colors = equal_sb([0.00, 0.05, 0.50])
    palette = refine_palette(colors, RefineConfig(0.1, 0.2))
    hues = sorted(rgb_to_hsb(c).hue for c in palette.colors)
    assert len(hues) == 2
    assert hues[0] == pytest.approx(0.0, abs=1e-6)
    assert hues[1] == pytest.approx(0.5, abs=1e-6)


def test_dark_color_dropped():
    colors = np.vstack([equal_sb([0.3]), [[0.1, 0.1, 0.1]]])  # brightness 0.1 < 0.2
    palette = refine_palette(colors)
    assert len(palette) == 1
    assert rgb_to_hsb(palette.colors[0]).brightness > 0.2


def test_higher_saturation_member_kept():
    a = hsb_to_rgb(HSBColor(0.30, 0.9, 0.9))
    b = hsb_to_rgb(HSBColor(0.33, 0.4, 0.9))
    palette = refine_palette(np.array([b, a]), RefineConfig(0.1, 0.2))
    assert len(palette) == 1
    assert rgb_to_hsb(palette.colors[0]).saturation == pytest.approx(0.9, abs=1e-6)


def test_already_refined_palette_unchanged():
    colors = equal_sb([0.05, 0.35, 0.65])
    palette = refine_palette(colors, RefineConfig(0.1, 0.2))
    assert np.allclose(palette.colors, colors)


def test_all_colors_eliminated_raises_with_advice():
    colors = np.array([[0.05, 0.05, 0.05]])
    with pytest.raises(PaletteError, match="manually"):
        refine_palette(colors)


def test_refined_palette_satisfies_hue_separation():
    rng = np.random.default_rng(3)
    colors = np.array([hsb_to_rgb(HSBColor(h, s, b)) for h, s, b in
                       zip(rng.uniform(0, 1, 20), rng.uniform(0.3, 1, 20),
                           rng.uniform(0.3, 1, 20))])
    cfg = RefineConfig(0.1, 0.2)
    palette = refine_palette(colors, cfg)
    hues = [rgb_to_hsb(c).hue for c in palette.colors]
    for i in range(len(hues)):
        for j in range(i + 1, len(hues)):
            assert hue_distance(hues[i], hues[j]) >= cfg.hue_threshold
    # outputs are members of the input set
    for c in palette.colors:
        assert np.min(np.linalg.norm(colors - c, axis=1)) < 1e-12


# --- style means -------------------------------------------------------------

def test_average_style_color_uniform():
    image = np.zeros((4, 4, 3))
    image[..., 0] = 1.0
    mask = np.zeros((4, 4), dtype=bool)
    mask[1:3, 1:3] = True
    assert np.allclose(average_style_color(image, mask), [1, 0, 0])


def test_average_style_color_mixture():
    image = np.zeros((2, 2, 3))
    image[0, 0] = [1, 0, 0]
    image[0, 1] = [0, 0, 1]
    mask = np.array([[True, True], [False, False]])
    assert np.allclose(average_style_color(image, mask), [0.5, 0, 0.5])


def test_average_style_color_weighted_counts():
    image = np.zeros((2, 2, 3))
    image[0, 0] = image[0, 1] = image[1, 0] = [1, 1, 1]
    mask = np.ones((2, 2), dtype=bool)
    assert np.allclose(average_style_color(image, mask), [0.75, 0.75, 0.75])


def test_empty_mask_rejected():
    with pytest.raises(PaletteError):
        average_style_color(np.zeros((2, 2, 3)), np.zeros((2, 2), dtype=bool))
