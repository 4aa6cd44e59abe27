"""
Synthetic iris dataset generator.

Each class (and session) gets its own smooth pigment field: a sum of broad
Gaussian bumps of both signs plus a few compact dark melanin spots, all inside
the iris annulus. Images of a class differ by a small rotation, an
illumination offset and pixel noise. Bump centres are rotated analytically,
so a zero-noise, zero-offset image is exact.
"""
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from app.imaging import GrayImage, save_gray, save_manifest
from app.models import DatasetManifest, IrisGeometry, ManifestEntry

logger = logging.getLogger(__name__)

SIZE = 240
CENTER = (120.0, 120.0)
PUPIL_RADIUS = 30.0
IRIS_RADIUS = 100.0
# Manifest circles sit just inside the rendered ones so strips hold iris texture only
MANIFEST_GEOMETRY = {"cx": CENTER[0], "cy": CENTER[1], "r_pupil": 32.0, "r_iris": 98.0}

PUPIL_LEVEL = 0.08
SCLERA_LEVEL = 0.85
BASE_LEVEL = {"VL": 0.45, "NIR": 0.55}
N_BUMPS = 14
N_SPOTS = 6


@dataclass(frozen=True)
class PigmentPattern:
    """Bump centres in polar form (radius, angle) around the eye centre"""
    radius: np.ndarray
    angle: np.ndarray
    width: np.ndarray
    amplitude: np.ndarray
    base: float


def make_pattern(rng: np.random.Generator, base: float = 0.45) -> PigmentPattern:
    n = N_BUMPS + N_SPOTS
    radius = rng.uniform(42.0, 88.0, n)
    angle = rng.uniform(0.0, 2.0 * np.pi, n)
    width = np.concatenate([rng.uniform(7.0, 16.0, N_BUMPS), rng.uniform(3.0, 6.0, N_SPOTS)])
    amplitude = np.concatenate([
        rng.uniform(0.06, 0.14, N_BUMPS) * rng.choice([-1.0, 1.0], N_BUMPS),
        -rng.uniform(0.08, 0.16, N_SPOTS),
    ])
    return PigmentPattern(radius, angle, width, amplitude, base)


def render_iris(pattern: PigmentPattern, rotation_deg: float = 0.0, offset: float = 0.0,
                noise_sigma: float = 0.0, rng: Optional[np.random.Generator] = None) -> GrayImage:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    cx, cy = CENTER
    r = np.hypot(xx - cx, yy - cy)

    theta = pattern.angle + np.deg2rad(rotation_deg)
    bx = cx + pattern.radius * np.cos(theta)
    by = cy - pattern.radius * np.sin(theta)
    d2 = (xx[..., None] - bx) ** 2 + (yy[..., None] - by) ** 2
    field = (pattern.amplitude * np.exp(-d2 / (2.0 * pattern.width ** 2))).sum(axis=2)

    img = np.where(r < PUPIL_RADIUS, PUPIL_LEVEL, np.where(r < IRIS_RADIUS, pattern.base + field, SCLERA_LEVEL))
    img = img + offset
    if noise_sigma > 0:
        img = img + (rng or np.random.default_rng(0)).normal(0.0, noise_sigma, img.shape)
    return GrayImage(np.clip(img, 0.0, 1.0))


def synth_dataset(
    out_dir: str,
    classes: int = 10,
    images_per_class: int = 5,
    noise_sigma: float = 0.01,
    seed: int = 0,
    sessions: Sequence[str] = ("VL",),
    max_rotation_deg: float = 3.0,
    max_offset: float = 0.05,
) -> DatasetManifest:
    """Render classes x images_per_class PNGs per session plus manifest.json under out_dir"""
    if classes < 2:
        raise ValueError(f"Need at least two classes, got {classes}")
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)

    entries: List[ManifestEntry] = []
    for s_idx, session in enumerate(sessions):
        base = BASE_LEVEL.get(session, BASE_LEVEL["VL"])
        for c in range(classes):
            pattern = make_pattern(np.random.default_rng([seed, c, s_idx]), base)
            subject = f"s{c:03d}"
            for i in range(images_per_class):
                rng = np.random.default_rng([seed, c, s_idx, i + 1])
                rotation = rng.uniform(-max_rotation_deg, max_rotation_deg)
                offset = rng.uniform(-max_offset, max_offset)
                img = render_iris(pattern, rotation, offset, noise_sigma, rng)
                path = os.path.join(image_dir, f"{subject}_L_{session}_{i}.png")
                save_gray(img, path)
                entries.append(ManifestEntry(subject_id=subject, eye="L", session=session, path=path,
                                             geometry=IrisGeometry(**MANIFEST_GEOMETRY)))

    manifest = DatasetManifest(entries=entries)
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    logger.info("Synthesized %d images (%d classes x %d x %d sessions) in %s",
                len(entries), classes, images_per_class, len(sessions), out_dir)
    return manifest
