"""
Image ingestion, iris unwrapping and dataset manifests.

Angles follow the on-screen anticlockwise convention: a point at angle theta
(degrees) and radius r sits at x = cx + r cos(theta), y = cy - r sin(theta), so
the default span 180..360 covers the lower half of the iris. Contour orientation
in app.shapedesc is defined in (column, row) coordinates instead, which makes
its "anticlockwise" clockwise on screen.
"""
import io
import json
import logging
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError
from scipy import ndimage

from app.errors import GeometryError, ImageError, ManifestError
from app.models import DatasetManifest, IrisGeometry, ManifestEntry
from app.utils.files import atomic_write_bytes, atomic_write_text
from app.utils.validation import validate_image_path

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
_SAVE_FORMATS = {".png": "PNG", ".pgm": "PPM"}


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major intensity field, values in [0, 1]"""
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ImageError(f"GrayImage needs a non-empty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ImageError("GrayImage contains non-finite intensities")
        if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
            raise ImageError(f"Intensities outside [0, 1]: [{arr.min():.4f}, {arr.max():.4f}]")
        arr = np.clip(arr, 0.0, 1.0)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class IrisStrip:
    """Unwrapped iris region; row 0 on the pupil circle, last row on the iris circle"""
    pixels: GrayImage
    out_of_bounds: bool = False

    def __post_init__(self):
        if self.rows < 8 or self.cols < 8:
            raise GeometryError(f"Strip must be at least 8x8, got {self.rows}x{self.cols}")

    @property
    def rows(self) -> int:
        return self.pixels.height

    @property
    def cols(self) -> int:
        return self.pixels.width


def load_gray(path: str) -> GrayImage:
    """
    Load a PNG or binary PGM file as a GrayImage.

    Color inputs are converted with luma weights 0.299R + 0.587G + 0.114B;
    8-bit inputs are scaled by 1/255, 16-bit inputs by 1/65535.
    """
    ok, msg = validate_image_path(path)
    if not ok:
        raise ImageError(msg)
    try:
        with Image.open(path) as im:
            im.load()
            fmt = im.format
            mode = im.mode
            if fmt not in ("PNG", "PPM"):
                raise ImageError(f"Unsupported image format {fmt} in {path}")
            if im.width == 0 or im.height == 0:
                raise ImageError(f"Zero-sized image: {path}")
            if mode == "P":
                im = im.convert("RGBA")
                mode = im.mode
            arr = np.asarray(im)
    except UnidentifiedImageError as e:
        raise ImageError(f"Unreadable image {path}: {e}") from e
    except OSError as e:
        raise ImageError(f"Failed to read image {path}: {e}") from e

    if mode in ("RGB", "RGBA"):
        rgb = arr[..., :3].astype(np.float64) / 255.0
        data = rgb @ np.array(LUMA_WEIGHTS)
    elif mode == "LA":
        data = arr[..., 0].astype(np.float64) / 255.0
    elif mode in ("L", "1"):
        data = arr.astype(np.float64) / (1.0 if mode == "1" else 255.0)
    elif mode.startswith("I"):
        data = arr.astype(np.float64) / 65535.0
    else:
        raise ImageError(f"Unsupported pixel mode {mode} in {path}")
    logger.debug("Loaded %s (%dx%d, mode=%s)", path, data.shape[1], data.shape[0], mode)
    return GrayImage(data)


def to_uint8(img: GrayImage) -> np.ndarray:
    return np.floor(img.data * 255.0 + 0.5).astype(np.uint8)


def save_gray(img: GrayImage, path: str) -> str:
    """Write an 8-bit PNG or binary PGM (P5) atomically, format chosen by extension"""
    ext = os.path.splitext(path)[1].lower()
    fmt = _SAVE_FORMATS.get(ext)
    if fmt is None:
        raise ImageError(f"Cannot save {path}: use .png or .pgm")
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img)).save(buf, format=fmt)
    return atomic_write_bytes(path, buf.getvalue())


def unwrap_iris(img: GrayImage, geom: IrisGeometry, rows: int = 150, cols: int = 300) -> IrisStrip:
    """
    Map the iris ring between the pupil and iris circles onto a rows x cols strip.

    Rows run linearly from the pupil circle (row 0) to the iris circle (last row);
    column c samples angle span_start + c * span / cols, anticlockwise. Samples
    falling outside the image take the nearest in-bounds pixel and set
    out_of_bounds.
    """
    geom.check()
    if rows < 8 or cols < 8:
        raise GeometryError(f"Strip must be at least 8x8, got {rows}x{cols}")

    start, end = geom.span_deg
    radii = geom.pupil_radius + (np.arange(rows) / (rows - 1)) * (geom.iris_radius - geom.pupil_radius)
    angles = np.deg2rad(start + np.arange(cols) * (end - start) / cols)

    xs = geom.center_x + radii[:, None] * np.cos(angles)[None, :]
    ys = geom.center_y - radii[:, None] * np.sin(angles)[None, :]

    h, w = img.shape
    outside = (xs < 0) | (xs > w - 1) | (ys < 0) | (ys > h - 1)
    out_of_bounds = bool(outside.any())
    if out_of_bounds:
        logger.warning("Unwrap samples %d of %d points outside the image; nearest-pixel fill used",
                       int(outside.sum()), outside.size)

    samples = ndimage.map_coordinates(img.data, [ys, xs], order=1, mode="nearest")
    return IrisStrip(GrayImage(np.clip(samples, 0.0, 1.0)), out_of_bounds=out_of_bounds)


def detect_circles(img: GrayImage, dark_fraction: float = 0.25) -> IrisGeometry:
    """
    Best-effort pupil/iris circle estimate for images without manifest geometry.

    The pupil is the largest connected region darker than min + dark_fraction * range;
    its centroid is the shared center and its equivalent-disk radius the pupil
    radius. The iris radius maximizes the outward gradient of the mean circle
    intensity. The result is always flagged as estimated.
    """
    data = img.data
    lo, hi = float(data.min()), float(data.max())
    if hi - lo < 1e-6:
        raise GeometryError("No dark pupil region found (constant image); supply geometry in the manifest")

    dark = data < lo + dark_fraction * (hi - lo)
    labels, count = ndimage.label(dark, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        raise GeometryError("No dark pupil region found; supply geometry in the manifest")
    areas = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(areas)) + 1
    pupil = labels == best
    area = float(areas[best - 1])
    if area < 12:
        raise GeometryError("Dark region too small to be a pupil; supply geometry in the manifest")

    cy, cx = ndimage.center_of_mass(pupil)
    r_pupil = float(np.sqrt(area / np.pi))

    h, w = data.shape
    rr, cc = np.nonzero(pupil)
    if rr.min() == 0 or cc.min() == 0 or rr.max() == h - 1 or cc.max() == w - 1:
        logger.warning("Pupil region touches the image border; circle estimate is unreliable")

    r_min = r_pupil * 1.2 + 2.0
    r_max = float(np.hypot(h, w))
    radii = np.arange(np.ceil(r_min), np.floor(r_max))
    theta = np.linspace(0.0, 2.0 * np.pi, 360, endpoint=False)
    xs = cx + radii[:, None] * np.cos(theta)[None, :]
    ys = cy - radii[:, None] * np.sin(theta)[None, :]
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    vals = ndimage.map_coordinates(data, [ys, xs], order=1, mode="nearest")
    counts = valid.sum(axis=1)
    keep = counts >= 36
    if keep.sum() < 3:
        raise GeometryError("Image too small around the pupil to locate the iris boundary")
    profile = (vals * valid).sum(axis=1)[keep] / counts[keep]
    gradient = np.gradient(profile)
    r_iris = float(radii[keep][int(np.argmax(gradient))])

    geom = IrisGeometry(
        center_x=float(cx), center_y=float(cy),
        pupil_radius=r_pupil, iris_radius=max(r_iris, r_pupil + 1.0),
        estimated=True,
    )
    logger.info("Estimated circles: center=(%.1f, %.1f) r_pupil=%.1f r_iris=%.1f",
                geom.center_x, geom.center_y, geom.pupil_radius, geom.iris_radius)
    return geom


def resolve_geometry(img: GrayImage, entry: ManifestEntry) -> IrisGeometry:
    if entry.geometry is not None:
        return entry.geometry
    logger.info("No geometry for %s; detecting circles", entry.path)
    return detect_circles(img)


def load_manifest(path: str) -> DatasetManifest:
    """
    Parse a JSON manifest (array of entries). Relative image paths resolve
    against the manifest's directory.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e
    if isinstance(raw, dict) and "entries" in raw:
        raw = raw["entries"]
    if not isinstance(raw, list):
        raise ManifestError(f"Manifest {path} must be a JSON array of entries")

    base = os.path.dirname(os.path.abspath(path))
    entries: List[ManifestEntry] = []
    for idx, item in enumerate(raw):
        try:
            entry = ManifestEntry.model_validate(item)
        except ValidationError as e:
            raise ManifestError(f"Manifest entry {idx} is invalid: {e}") from e
        if not os.path.isabs(entry.path):
            entry = entry.model_copy(update={"path": os.path.join(base, entry.path)})
        if entry.geometry is not None:
            try:
                entry.geometry.check()
            except GeometryError as e:
                raise ManifestError(f"Manifest entry {idx} ({entry.path}): {e}") from e
        entries.append(entry)
    logger.info("Loaded manifest %s with %d entries", path, len(entries))
    return DatasetManifest(entries=entries)


def save_manifest(manifest: DatasetManifest, path: str, relative_to: Optional[str] = None) -> str:
    base = relative_to or os.path.dirname(os.path.abspath(path))
    items = []
    for e in manifest.entries:
        item = {"subject_id": e.subject_id, "eye": e.eye, "session": e.session,
                "path": os.path.relpath(e.path, base) if os.path.isabs(e.path) else e.path}
        if e.geometry is not None:
            g = e.geometry
            item["geometry"] = {"cx": g.center_x, "cy": g.center_y, "r_pupil": g.pupil_radius,
                                "r_iris": g.iris_radius, "span_deg": list(g.span_deg)}
        items.append(item)
    return atomic_write_text(path, json.dumps(items, indent=2) + "\n")
