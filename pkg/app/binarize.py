"""
Variational binarization.

A Gaussian is fitted to the dominant peak of the intensity histogram. Its tip
and the crossings of the lines at one and two thirds of its height give five
thresholds, which slice the image into six intensity bands. The two largest
8-connected components of each inner band (2..5) are the shapes that get coded.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import ndimage
from scipy.ndimage import uniform_filter1d
from scipy.optimize import OptimizeWarning, curve_fit

from app.errors import BinarizeError, ContourError
from app.imaging import GrayImage
from app.shapedesc import Contour, trace_boundary

logger = logging.getLogger(__name__)

N_BINS = 256
SMOOTH_WIDTH = 5
MAX_FIT_ITERATIONS = 200
SIGMA_FLOOR = 1.0 / N_BINS
LOBE_FRACTION = 0.05

# x = mu +/- sigma * sqrt(2 ln(A / h)) for h = A/3 and h = 2A/3
OUTER_OFFSET = math.sqrt(2.0 * math.log(3.0))
INNER_OFFSET = math.sqrt(2.0 * math.log(1.5))
THRESHOLD_LOW = 0.005
THRESHOLD_HIGH = 0.995
PLACEMENT_SIGMA_FLOOR = 1e-9

N_BANDS = 6
CODED_BANDS = (2, 3, 4, 5)
OBJECTS_PER_BAND = 2
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def gaussian(x, amp, mean, sigma):
    return amp * np.exp(-((x - mean) ** 2) / (2.0 * sigma ** 2))


def bin_centers(n_bins: int = N_BINS) -> np.ndarray:
    return (np.arange(n_bins) + 0.5) / n_bins


@dataclass(frozen=True, eq=False)
class HistogramModel:
    bins: np.ndarray
    amp: float
    mean: float
    sigma: float
    converged: bool = True
    fallback: bool = False

    @property
    def pixel_count(self) -> int:
        return int(self.bins.sum())


@dataclass(frozen=True)
class ThresholdSet:
    """t1..t5 strictly increasing inside (0, 1); t0 = 0 and t6 = 1 are implicit"""
    t: Tuple[float, float, float, float, float]
    sigma_used: float
    adjusted: bool = False

    @property
    def edges(self) -> Tuple[float, ...]:
        return (0.0,) + tuple(self.t) + (1.0,)


@dataclass(frozen=True, eq=False)
class SlicedTemplate:
    """Six boolean masks partitioning the pixels, band i at masks[i - 1]"""
    band_map: np.ndarray
    masks: Tuple[np.ndarray, ...]

    def mask(self, band: int) -> np.ndarray:
        return self.masks[band - 1]

    @property
    def shape(self):
        return self.band_map.shape


@dataclass(frozen=True, eq=False)
class SelectedObject:
    template_index: int
    rank: int
    pixels: np.ndarray  # (k, 2) array of (row, col)
    contour: Contour
    area: int
    placeholder: bool = False


@dataclass(eq=False)
class ObjectSelection:
    objects: List[SelectedObject] = field(default_factory=list)

    @property
    def degraded(self) -> bool:
        return any(o.placeholder for o in self.objects)


def smooth_histogram(bins: np.ndarray, width: int = SMOOTH_WIDTH) -> np.ndarray:
    return uniform_filter1d(bins.astype(np.float64), size=width, mode="constant")


def _dominant_lobe(smoothed: np.ndarray, mode_idx: int) -> slice:
    """Contiguous run of bins around the mode staying above LOBE_FRACTION of its height"""
    floor = smoothed[mode_idx] * LOBE_FRACTION
    lo = mode_idx
    while lo > 0 and smoothed[lo - 1] >= floor:
        lo -= 1
    hi = mode_idx
    while hi < len(smoothed) - 1 and smoothed[hi + 1] >= floor:
        hi += 1
    return slice(lo, hi + 1)


def fit_gaussian(img: GrayImage) -> HistogramModel:
    """
    Fit A * exp(-(x - mu)^2 / (2 sigma^2)) to the dominant peak of the smoothed
    256-bin histogram by nonlinear least squares, seeded from the histogram mode
    and the sample standard deviation. Falls back to moment estimates when the
    histogram is degenerate or the fit fails to converge.
    """
    data = img.data.ravel()
    if data.size < N_BINS:
        raise BinarizeError(f"Histogram fit needs at least {N_BINS} pixels, got {data.size}")

    bins, _ = np.histogram(data, bins=N_BINS, range=(0.0, 1.0))
    smoothed = smooth_histogram(bins)
    x = bin_centers()
    mode_idx = int(np.argmax(smoothed))
    peak = float(smoothed[mode_idx])
    sample_mean = float(data.mean())
    sample_std = float(data.std())

    def fallback(reason: str) -> HistogramModel:
        logger.warning("Gaussian fit fallback to moments: %s", reason)
        return HistogramModel(bins=bins, amp=max(peak, 1e-12), mean=min(max(sample_mean, 0.0), 1.0),
                              sigma=max(sample_std, SIGMA_FLOOR), converged=False, fallback=True)

    if sample_std < SIGMA_FLOOR:
        return fallback("degenerate histogram")

    lobe = _dominant_lobe(smoothed, mode_idx)
    if lobe.stop - lobe.start < 4:
        return fallback("dominant peak narrower than four bins")

    p0 = (peak, float(x[mode_idx]), max(sample_std, SIGMA_FLOOR))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            params, _ = curve_fit(gaussian, x[lobe], smoothed[lobe], p0=p0, maxfev=MAX_FIT_ITERATIONS)
    except (RuntimeError, ValueError) as e:
        return fallback(f"no convergence after {MAX_FIT_ITERATIONS} iterations ({e})")

    amp, mean, sigma = float(params[0]), float(params[1]), abs(float(params[2]))
    if not (np.isfinite([amp, mean, sigma]).all() and amp > 0 and 0.0 <= mean <= 1.0 and sigma > 0):
        return fallback(f"fit left the valid range (amp={amp:.3g}, mean={mean:.3g}, sigma={sigma:.3g})")

    logger.debug("Histogram fit: amp=%.2f mean=%.4f sigma=%.4f", amp, mean, sigma)
    return HistogramModel(bins=bins, amp=amp, mean=mean, sigma=sigma)


def compute_thresholds(model: HistogramModel) -> ThresholdSet:
    """
    Tip of the Gaussian plus the crossings at heights A/3 and 2A/3.

    When the outer thresholds would leave (0.005, 0.995) the placement sigma is
    shrunk to the largest value keeping them inside; sigma is also floored so the
    five thresholds stay strictly increasing.
    """
    mu = float(model.mean)
    adjusted = False
    if not THRESHOLD_LOW < mu < THRESHOLD_HIGH:
        mu = min(max(mu, THRESHOLD_LOW + 1e-3), THRESHOLD_HIGH - 1e-3)
        adjusted = True
        logger.warning("Histogram mean %.4f too close to the range ends; thresholds centred at %.4f",
                       model.mean, mu)

    sigma = float(model.sigma)
    limit = min(mu - THRESHOLD_LOW, THRESHOLD_HIGH - mu) / OUTER_OFFSET
    if sigma >= limit:
        sigma = limit * (1.0 - 1e-9)
        adjusted = True
        logger.warning("Threshold sigma shrunk from %.4f to %.4f to stay inside (%.3f, %.3f)",
                       model.sigma, sigma, THRESHOLD_LOW, THRESHOLD_HIGH)
    if sigma < PLACEMENT_SIGMA_FLOOR:
        sigma = PLACEMENT_SIGMA_FLOOR
        adjusted = True
        logger.warning("Threshold sigma raised to the floor %.1e to keep thresholds ordered", sigma)

    t = (
        mu - sigma * OUTER_OFFSET,
        mu - sigma * INNER_OFFSET,
        mu,
        mu + sigma * INNER_OFFSET,
        mu + sigma * OUTER_OFFSET,
    )
    return ThresholdSet(t=t, sigma_used=sigma, adjusted=adjusted)


def slice_image(img: GrayImage, t: ThresholdSet) -> SlicedTemplate:
    """Band i holds t(i-1) <= v < t(i) for i = 1..5; band 6 holds t5 <= v <= 1"""
    band_map = np.searchsorted(np.asarray(t.t), img.data, side="right") + 1
    masks = tuple(band_map == band for band in range(1, N_BANDS + 1))
    return SlicedTemplate(band_map=band_map, masks=masks)


def _placeholder(band: int, mask: np.ndarray, rank: int) -> SelectedObject:
    """Rectangle covering the band's bounding box (whole image when the band is empty)"""
    h, w = mask.shape
    rows, cols = np.nonzero(mask)
    if rows.size:
        r0, r1, c0, c1 = int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max())
    else:
        r0, r1, c0, c1 = 0, h - 1, 0, w - 1
    # At least 3x3 so the outline has 8 points
    if r1 - r0 < 2:
        r0 = max(0, min(r0, h - 3))
        r1 = min(h - 1, r0 + 2)
    if c1 - c0 < 2:
        c0 = max(0, min(c0, w - 3))
        c1 = min(w - 1, c0 + 2)
    box = np.zeros_like(mask, dtype=bool)
    box[r0:r1 + 1, c0:c1 + 1] = True
    contour = trace_boundary(box)
    pixels = np.argwhere(box)
    return SelectedObject(template_index=band, rank=rank, pixels=pixels, contour=contour,
                          area=int(pixels.shape[0]), placeholder=True)


def select_objects(sliced: SlicedTemplate, min_area: int = 30) -> ObjectSelection:
    """
    Two largest 8-connected components (area >= min_area) in each of bands 2..5,
    in template-major, rank-minor order. Missing objects become bounding-box
    placeholders so the code layout keeps exactly eight objects.
    """
    selection = ObjectSelection()
    for band in CODED_BANDS:
        mask = sliced.mask(band)
        labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
        areas = np.bincount(labels.ravel(), minlength=count + 1)[1:]
        # Largest first, lower label breaks ties
        order = sorted((int(-a), lbl + 1) for lbl, a in enumerate(areas) if a >= min_area)
        found: List[SelectedObject] = []
        for _, lbl in order:
            if len(found) == OBJECTS_PER_BAND:
                break
            component = labels == lbl
            try:
                contour = trace_boundary(component)
            except ContourError as e:
                logger.debug("Skipping component %d of band %d: %s", lbl, band, e)
                continue
            pixels = np.argwhere(component)
            found.append(SelectedObject(template_index=band, rank=len(found) + 1, pixels=pixels,
                                        contour=contour, area=int(pixels.shape[0])))
        if len(found) < OBJECTS_PER_BAND:
            logger.warning("Band %d has fewer than %d usable components of area >= %d; using placeholder",
                           band, OBJECTS_PER_BAND, min_area)
        while len(found) < OBJECTS_PER_BAND:
            found.append(_placeholder(band, mask, len(found) + 1))
        selection.objects.extend(found)
    return selection
