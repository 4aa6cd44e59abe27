"""
Stage dumps for one image: unwrapped strip, both enhancement stages, the six
band masks, the selected contours, the histogram fit and the feature curves.
"""
import csv
import io
import logging
import os

import numpy as np

from app.binarize import N_BANDS, bin_centers, gaussian, smooth_histogram
from app.imaging import GrayImage, detect_circles, load_gray, save_gray
from app.models import IrisGeometry, PipelineConfig
from app.pipeline import PipelineResult, extract_code
from app.shapecode import default_labels
from app.utils.files import atomic_write_json, atomic_write_text

logger = logging.getLogger(__name__)

GEOMETRY_FLAGS = ("cx", "cy", "r_pupil", "r_iris")


def register(subparsers, parents):
    p = subparsers.add_parser("inspect", parents=parents, help="Dump every pipeline stage for one image")
    p.add_argument("image", help="PNG or PGM eye image")
    p.add_argument("--cx", type=float, default=None)
    p.add_argument("--cy", type=float, default=None)
    p.add_argument("--r-pupil", type=float, default=None)
    p.add_argument("--r-iris", type=float, default=None)
    p.set_defaults(func=run)
    return p


def contour_overlay(result: PipelineResult) -> GrayImage:
    """Filtered strip dimmed to half intensity with every selected contour drawn white"""
    canvas = np.array(result.filtered.data) * 0.5
    for obj in result.selection.objects:
        pts = np.rint(obj.contour.points).astype(int)
        canvas[pts[:, 1], pts[:, 0]] = 1.0
    return GrayImage(canvas)


def _histogram_csv(result: PipelineResult) -> str:
    model = result.model
    smoothed = smooth_histogram(model.bins)
    centers = bin_centers(len(model.bins))
    fitted = gaussian(centers, model.amp, model.mean, model.sigma)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin", "center", "count", "smoothed", "model"])
    for i, (c, n, s, f) in enumerate(zip(centers, model.bins, smoothed, fitted)):
        writer.writerow([i, f"{c:.6f}", int(n), f"{s:.4f}", f"{f:.4f}"])
    return buf.getvalue()


def _features_csv(result: PipelineResult) -> str:
    labels = default_labels(result.code.m)
    curves = [per_object[k] for k in range(3) for per_object in result.curves]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for label, curve in zip(labels, curves):
        writer.writerow([label] + [f"{v:.6f}" for v in curve.samples])
    return buf.getvalue()


def run(args, config: PipelineConfig) -> int:
    img = load_gray(args.image)
    given = [getattr(args, f) for f in GEOMETRY_FLAGS]
    if all(v is not None for v in given):
        geometry = IrisGeometry(cx=args.cx, cy=args.cy, r_pupil=args.r_pupil, r_iris=args.r_iris)
    else:
        if any(v is not None for v in given):
            logger.warning("Incomplete geometry flags; detecting circles instead")
        geometry = detect_circles(img)

    result = extract_code(img, geometry, config)
    out = args.out
    os.makedirs(out, exist_ok=True)

    save_gray(result.strip.pixels, os.path.join(out, "strip.pgm"))
    save_gray(result.homomorphic, os.path.join(out, "homomorphic.pgm"))
    save_gray(result.filtered, os.path.join(out, "tikhonov.pgm"))
    for band in range(1, N_BANDS + 1):
        mask = result.sliced.mask(band).astype(np.float64)
        save_gray(GrayImage(mask), os.path.join(out, f"band_{band}.pgm"))
    save_gray(contour_overlay(result), os.path.join(out, "contours.pgm"))

    atomic_write_text(os.path.join(out, "histogram.csv"), _histogram_csv(result))
    atomic_write_text(os.path.join(out, "features.csv"), _features_csv(result))
    atomic_write_json(os.path.join(out, "thresholds.json"), {
        "seed": config.seed,
        "geometry": result.geometry.model_dump(by_alias=True),
        "fit": {"amp": result.model.amp, "mean": result.model.mean, "sigma": result.model.sigma,
                "converged": result.model.converged, "fallback": result.model.fallback},
        "thresholds": list(result.thresholds.t),
        "sigma_used": result.thresholds.sigma_used,
        "adjusted": result.thresholds.adjusted,
        "objects": [{"band": o.template_index, "rank": o.rank, "area": o.area, "placeholder": o.placeholder}
                    for o in result.selection.objects],
        "warnings": result.warnings,
    })
    logger.info("Wrote stage dumps for %s to %s", args.image, out)
    return 0
