"""
Contour extraction and shape descriptors.

Contours are (x, y) point lists with x = column and y = row. "Anticlockwise"
means a positive shoelace area in those coordinates; every constructor enforces
it by reversing the point order when needed. With rows growing downward this is
clockwise on screen, the opposite sense to the unwrap angles in app.imaging.
All codes share the convention, so matching is unaffected.

Descriptors (all resampled to n values in [0, 1]):
  RVF  radius-vector function, distance from the centroid to the contour per direction
  SF   support function, largest projection of the contour on each direction
  TAF  tangent-angle function, unwrapped tangent orientation along the arclength
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.errors import ContourError

logger = logging.getLogger(__name__)

MIN_POINTS = 8
KINDS = ("RVF", "SF", "TAF")

# Moore neighbourhood in clockwise screen order starting west, as (drow, dcol)
_NEIGHBOURS = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_NEIGHBOUR_INDEX = {d: i for i, d in enumerate(_NEIGHBOURS)}


def _signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class Contour:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ContourError(f"Contour points must be an (k, 2) array, got {pts.shape}")
        if pts.shape[0] < MIN_POINTS:
            raise ContourError(f"Contour needs at least {MIN_POINTS} points, got {pts.shape[0]}")
        area = _signed_area(pts)
        if area == 0.0:
            raise ContourError("Contour encloses no area")
        if area < 0:
            pts = pts[::-1].copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def signed_area(self) -> float:
        return _signed_area(self.points)

    @property
    def perimeter(self) -> float:
        return float(np.linalg.norm(np.roll(self.points, -1, axis=0) - self.points, axis=1).sum())

    @property
    def centroid(self) -> Tuple[float, float]:
        """Area centroid of the closed polygon"""
        pts = self.points
        x, y = pts[:, 0], pts[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a6 = 3.0 * cross.sum()
        return float(((x + xn) * cross).sum() / a6), float(((y + yn) * cross).sum() / a6)

    def translated(self, dx: float, dy: float) -> "Contour":
        return Contour(self.points + np.array([dx, dy]))


@dataclass(frozen=True, eq=False)
class FeatureCurve:
    kind: str
    samples: np.ndarray
    scale: float = 1.0
    fallback: bool = False

    @property
    def raw(self) -> np.ndarray:
        """Samples before normalization (RVF and SF); TAF is stored in turns"""
        return self.samples * self.scale


def trace_boundary(mask: np.ndarray) -> Contour:
    """
    Outer boundary of the single 8-connected component in mask, by Moore-neighbour
    tracing. Stops once the start pixel is left by its first move a second time.
    """
    padded = np.pad(np.asarray(mask, dtype=bool), 1)
    rows, cols = np.nonzero(padded)
    if rows.size == 0:
        raise ContourError("Cannot trace an empty mask")
    start = (int(rows[0]), int(cols[0]))
    # Raster order makes the west neighbour of the first pixel background
    p, back = start, 0
    path = [start]
    first_move = None
    max_steps = 4 * int(rows.size) + 16
    for _ in range(max_steps):
        nxt = None
        for k in range(1, 9):
            idx = (back + k) % 8
            dr, dc = _NEIGHBOURS[idx]
            q = (p[0] + dr, p[1] + dc)
            if padded[q]:
                pr, pc = _NEIGHBOURS[(idx - 1) % 8]
                prev = (p[0] + pr, p[1] + pc)
                back = _NEIGHBOUR_INDEX[(prev[0] - q[0], prev[1] - q[1])]
                nxt = q
                break
        if nxt is None:
            break  # isolated pixel
        if first_move is None:
            first_move = nxt
        elif p == start and nxt == first_move:
            break
        path.append(nxt)
        p = nxt
    else:
        logger.warning("Boundary trace hit the %d step limit", max_steps)
    if len(path) > 1 and path[-1] == start:
        path.pop()
    pts = np.array([(c - 1, r - 1) for r, c in path], dtype=np.float64)
    return Contour(pts)


def _ray_distances(points: np.ndarray, origin: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Farthest intersection of each ray from origin with the closed polygon (nan if none)"""
    p = points - origin
    e = np.roll(p, -1, axis=0) - p
    d = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # origin + t d = p + s e
    denom = d[:, 0:1] * e[None, :, 1] - d[:, 1:2] * e[None, :, 0]
    cross_pe = p[:, 0] * e[:, 1] - p[:, 1] * e[:, 0]
    cross_pd = p[None, :, 0] * d[:, 1:2] - p[None, :, 1] * d[:, 0:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_pe[None, :] / denom
        s = cross_pd / denom
    ok = (np.abs(denom) > 1e-12) & (s >= -1e-12) & (s <= 1.0 + 1e-12) & (t >= 0.0)
    t = np.where(ok, t, -np.inf)
    best = t.max(axis=1)
    return np.where(np.isfinite(best), best, np.nan)


def _inside(points: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test for an (m, 2) array of query points"""
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    qx, qy = xy[:, 0:1], xy[:, 1:2]
    straddle = (y[None, :] > qy) != (yn[None, :] > qy)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x[None, :] + (qy - y[None, :]) * (xn - x)[None, :] / (yn - y)[None, :]
    hits = straddle & (qx < x_cross)
    return (hits.sum(axis=1) % 2) == 1


def _segment_distance(points: np.ndarray, xy: np.ndarray) -> np.ndarray:
    a = points
    b = np.roll(points, -1, axis=0)
    ab = b - a
    length2 = np.maximum((ab ** 2).sum(axis=1), 1e-12)
    ap = xy[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / length2[None, :], 0.0, 1.0)
    nearest = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.linalg.norm(xy[:, None, :] - nearest, axis=2).min(axis=1)


def _deepest_inner_point(c: Contour, grid: int = 24) -> Optional[np.ndarray]:
    pts = c.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], grid), np.linspace(lo[1], hi[1], grid))
    candidates = np.stack([gx.ravel(), gy.ravel()], axis=1)
    candidates = candidates[_inside(pts, candidates)]
    if candidates.size == 0:
        return None
    depth = _segment_distance(pts, candidates)
    return candidates[int(np.argmax(depth))]


def reference_point(c: Contour) -> Tuple[np.ndarray, bool]:
    """Centroid, or the interior point deepest inside the contour when the centroid falls outside"""
    centroid = np.array(c.centroid)
    if _inside(c.points, centroid[None, :])[0]:
        return centroid, False
    inner = _deepest_inner_point(c)
    if inner is None:
        return centroid, True
    logger.warning("Centroid outside contour; using deepest interior point (%.1f, %.1f)", inner[0], inner[1])
    return inner, True


def _directions(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


def _normalized(kind: str, raw: np.ndarray, fallback: bool = False) -> FeatureCurve:
    peak = float(raw.max())
    if peak <= 0.0:
        return FeatureCurve(kind, np.zeros_like(raw), scale=1.0, fallback=fallback)
    return FeatureCurve(kind, np.clip(raw / peak, 0.0, 1.0), scale=peak, fallback=fallback)


def radius_vector(c: Contour, n: int = 100) -> FeatureCurve:
    """Distance from the reference point to the farthest contour crossing, n directions, max-normalized"""
    origin, fallback = reference_point(c)
    r = _ray_distances(c.points, origin, _directions(n))
    r = np.where(np.isnan(r), 0.0, r)
    return _normalized("RVF", r, fallback)


def support_function(c: Contour, n: int = 100) -> FeatureCurve:
    """S(phi) = max over contour points of x cos(phi) + y sin(phi), relative to the centroid"""
    rel = c.points - np.array(c.centroid)
    phi = _directions(n)
    proj = rel @ np.stack([np.cos(phi), np.sin(phi)], axis=0)
    s = np.maximum(proj.max(axis=0), 0.0)
    return _normalized("SF", s)


def resample_arclength(c: Contour, n: int) -> np.ndarray:
    """n points equally spaced by arclength along the closed contour, starting at its first point"""
    closed = np.vstack([c.points, c.points[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.arange(n) * s[-1] / n
    return np.stack([np.interp(targets, s, closed[:, 0]), np.interp(targets, s, closed[:, 1])], axis=1)


def _tangent_angles(c: Contour, n: int) -> np.ndarray:
    pts = resample_arclength(c, n)
    # Five-point central difference on the closed, arclength-uniform samples
    d = (-np.roll(pts, -2, axis=0) + 8.0 * np.roll(pts, -1, axis=0)
         - 8.0 * np.roll(pts, 1, axis=0) + np.roll(pts, 2, axis=0)) / 12.0
    return np.arctan2(d[:, 1], d[:, 0])


def total_turning(c: Contour, n: int = 400) -> float:
    """Sum of wrapped tangent increments around the closed contour (2 pi when simple and anticlockwise)"""
    theta = _tangent_angles(c, n)
    steps = np.diff(np.concatenate([theta, theta[:1]]))
    return float(np.sum((steps + np.pi) % (2.0 * np.pi) - np.pi))


def tangent_angle(c: Contour, n: int = 100) -> FeatureCurve:
    """Unwrapped tangent angle along the arclength from p0, mapped from [phi0, phi0 + 2 pi] to [0, 1]"""
    theta = np.unwrap(_tangent_angles(c, n))
    turns = (theta - theta[0]) / (2.0 * np.pi)
    return FeatureCurve("TAF", np.clip(turns, 0.0, 1.0), scale=1.0)


def start_point_canonicalize(c: Contour) -> Contour:
    """Rotate the point list so p0 is farthest from the centroid; ties go to the smallest polar angle"""
    rel = c.points - np.array(c.centroid)
    dist = np.hypot(rel[:, 0], rel[:, 1])
    ties = np.flatnonzero(np.isclose(dist, dist.max(), rtol=1e-9, atol=1e-9))
    polar = np.mod(np.arctan2(rel[ties, 1], rel[ties, 0]), 2.0 * np.pi)
    start = int(ties[int(np.argmin(polar))])
    return Contour(np.roll(c.points, -start, axis=0))


def describe(c: Contour, n: int = 100) -> Tuple[FeatureCurve, FeatureCurve, FeatureCurve]:
    canonical = start_point_canonicalize(c)
    return radius_vector(canonical, n), support_function(canonical, n), tangent_angle(canonical, n)
