from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pytest
import torch

from volstyle.dataset import SceneDataset, load_dataset, save_dataset
from volstyle.fixture import FixtureSpec, default_fixture_spec, generate_fixture

torch.set_num_threads(2)

CACHE_ROOT = Path(__file__).parent / ".cache"


def cached_fixture(spec: FixtureSpec) -> SceneDataset:
    """Generate (or reload) a fixture dataset; generation is deterministic so
    the disk cache is exactly equivalent to regeneration."""
    key = hashlib.sha1(json.dumps(asdict(spec), sort_keys=True, default=str)
                       .encode()).hexdigest()[:16]
    out_dir = CACHE_ROOT / f"fixture_{key}"
    manifest = out_dir / "manifest.json"
    if manifest.exists():
        return load_dataset(manifest)
    dataset = generate_fixture(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out_dir)
    return dataset


@pytest.fixture(scope="session")
def fixture_spec() -> FixtureSpec:
    return default_fixture_spec()


@pytest.fixture(scope="session")
def fixture_dataset(fixture_spec) -> SceneDataset:
    return cached_fixture(fixture_spec)


@pytest.fixture(scope="session")
def small_fixture_spec() -> FixtureSpec:
    """A 48x48 variant for tests that train but do not measure quality."""
    base = default_fixture_spec(resolution=48, train_cameras=10, heldout_cameras=2)
    return base


@pytest.fixture(scope="session")
def small_fixture_dataset(small_fixture_spec) -> SceneDataset:
    return cached_fixture(small_fixture_spec)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
