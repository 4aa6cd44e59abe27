import os

import numpy as np
import pytest

from app.imaging import save_manifest
from app.models import DatasetManifest, PipelineConfig
from app.shapecode import ShapeCode
from app.shapedesc import Contour
from evaluation.codebook import CodeBook
from evaluation.synth import synth_dataset


@pytest.fixture
def config():
    return PipelineConfig()


@pytest.fixture
def disk_mask():
    def _make(radius, size=None, center=None):
        size = size or int(2 * radius + 21)
        c = center if center is not None else (size // 2, size // 2)
        yy, xx = np.mgrid[0:size, 0:size]
        return (xx - c[1]) ** 2 + (yy - c[0]) ** 2 <= radius ** 2
    return _make


@pytest.fixture
def ellipse_contour():
    def _make(a, b, points=360, phase_deg=0.0, center=(0.0, 0.0), rotate_deg=0.0):
        t = np.deg2rad(phase_deg + np.arange(points) * 360.0 / points)
        x, y = a * np.cos(t), b * np.sin(t)
        rot = np.deg2rad(rotate_deg)
        xr = x * np.cos(rot) - y * np.sin(rot)
        yr = x * np.sin(rot) + y * np.cos(rot)
        return Contour(np.stack([xr + center[0], yr + center[1]], axis=1))
    return _make


@pytest.fixture
def random_code():
    def _make(rng, m=24, n=100, b=8, degraded=False):
        return ShapeCode(rng.integers(0, 1 << b, size=(m, n)), b=b, degraded=degraded)
    return _make


@pytest.fixture(scope="session")
def synth_set(tmp_path_factory):
    """10 classes x 5 images for both sessions, rendered once per test run"""
    out = str(tmp_path_factory.mktemp("synth"))
    manifest = synth_dataset(out, classes=10, images_per_class=5, noise_sigma=0.01, seed=0, sessions=("VL", "NIR"))
    return out, manifest


@pytest.fixture(scope="session")
def vl_manifest_path(synth_set):
    out, manifest = synth_set
    path = os.path.join(out, "manifest_vl.json")
    save_manifest(DatasetManifest(entries=manifest.for_session("VL")), path)
    return path


@pytest.fixture(scope="session")
def shared_codebook():
    return CodeBook(PipelineConfig())
