from __future__ import annotations

import json

import numpy as np
import pytest

from volstyle.dataset import DatasetError, load_dataset, read_png, save_dataset, write_png
from volstyle.fixture import default_fixture_spec, generate_fixture


def test_fixture_round_trips_bit_identical(small_fixture_dataset, tmp_path):
    save_dataset(small_fixture_dataset, tmp_path)
    reloaded = load_dataset(tmp_path / "manifest.json")
    assert len(reloaded.frames) == len(small_fixture_dataset.frames)
    for (img_a, cam_a), (img_b, cam_b) in zip(small_fixture_dataset.frames,
                                              reloaded.frames):
        assert np.array_equal(img_a, img_b)
        assert np.allclose(cam_a.pose, cam_b.pose)
        assert cam_a.fov_x == pytest.approx(cam_b.fov_x)
    assert reloaded.train_indices == small_fixture_dataset.train_indices
    assert reloaded.heldout_indices == small_fixture_dataset.heldout_indices
    assert np.allclose(reloaded.background, small_fixture_dataset.background)


def test_empty_manifest_rejected(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"camera_angle_x": 0.9, "frames": []}))
    with pytest.raises(DatasetError, match="no frames"):
        load_dataset(path)


def test_missing_image_named(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({
        "camera_angle_x": 0.9,
        "frames": [{"file_path": "images/nope.png",
                    "transform_matrix": np.eye(4).tolist()}]}))
    with pytest.raises(DatasetError, match="frame 0"):
        load_dataset(path)


def test_reflected_pose_rejected(tmp_path):
    img = np.zeros((4, 4, 3))
    (tmp_path / "images").mkdir()
    write_png(tmp_path / "images" / "f.png", img)
    pose = np.eye(4)
    pose[0, 0] = -1.0  # determinant -1
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({
        "camera_angle_x": 0.9,
        "frames": [{"file_path": "images/f.png", "transform_matrix": pose.tolist()}]}))
    with pytest.raises(DatasetError, match="determinant -1"):
        load_dataset(path)


def test_mixed_resolutions_rejected(tmp_path):
    (tmp_path / "images").mkdir()
    write_png(tmp_path / "images" / "a.png", np.zeros((4, 4, 3)))
    write_png(tmp_path / "images" / "b.png", np.zeros((8, 8, 3)))
    frames = [{"file_path": f"images/{n}.png", "transform_matrix": np.eye(4).tolist()}
              for n in ("a", "b")]
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"camera_angle_x": 0.9, "frames": frames}))
    with pytest.raises(DatasetError, match="resolution"):
        load_dataset(path)


def test_png_codec_is_exact_for_quantized_values(tmp_path):
    rng = np.random.default_rng(0)
    image = (rng.integers(0, 256, size=(8, 8, 3)) / 255.0).astype(np.float32)
    write_png(tmp_path / "x.png", image)
    back = read_png(tmp_path / "x.png")
    assert np.array_equal(back, image)


def test_fixture_determinism():
    spec = default_fixture_spec(resolution=24, train_cameras=2, heldout_cameras=1)
    a = generate_fixture(spec)
    b = generate_fixture(spec)
    for (img_a, _), (img_b, _) in zip(a.frames, b.frames):
        assert np.array_equal(img_a, img_b)
