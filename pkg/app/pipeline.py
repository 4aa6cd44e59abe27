"""
End-to-end enrollment pipeline: unwrap, enhance, binarize, select, describe, code.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

from app.binarize import (
    HistogramModel,
    ObjectSelection,
    SlicedTemplate,
    ThresholdSet,
    compute_thresholds,
    fit_gaussian,
    select_objects,
    slice_image,
)
from app.enhance import homomorphic_enhance, tikhonov_filter
from app.imaging import GrayImage, IrisStrip, load_gray, resolve_geometry, unwrap_iris
from app.models import IrisGeometry, ManifestEntry, PipelineConfig
from app.shapecode import ShapeCode, assemble_curves, describe_objects
from app.shapedesc import FeatureCurve

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PipelineResult:
    geometry: IrisGeometry
    strip: IrisStrip
    homomorphic: GrayImage
    filtered: GrayImage
    model: HistogramModel
    thresholds: ThresholdSet
    sliced: SlicedTemplate
    selection: ObjectSelection
    curves: List[Tuple[FeatureCurve, FeatureCurve, FeatureCurve]]
    code: ShapeCode
    warnings: List[str] = field(default_factory=list)


def _collect_warnings(result: PipelineResult) -> List[str]:
    flags = []
    if result.geometry.estimated:
        flags.append("estimated_geometry")
    if result.strip.out_of_bounds:
        flags.append("unwrap_out_of_bounds")
    if result.model.fallback:
        flags.append("histogram_fit_fallback")
    if result.thresholds.adjusted:
        flags.append("thresholds_adjusted")
    if result.selection.degraded:
        flags.append("degraded_objects")
    if any(c.fallback for per_object in result.curves for c in per_object):
        flags.append("rvf_reference_fallback")
    return flags


def extract_code(img: GrayImage, geometry: IrisGeometry, config: PipelineConfig) -> PipelineResult:
    rows, cols = config.strip_shape
    strip = unwrap_iris(img, geometry, rows=rows, cols=cols)
    homomorphic = homomorphic_enhance(strip.pixels)
    filtered = tikhonov_filter(homomorphic, config.tikhonov)

    model = fit_gaussian(filtered)
    thresholds = compute_thresholds(model)
    sliced = slice_image(filtered, thresholds)
    selection = select_objects(sliced, min_area=config.min_area)

    curves = describe_objects(selection.objects, n=config.n_samples)
    code = assemble_curves(curves, b=config.bits, degraded=selection.degraded)

    result = PipelineResult(
        geometry=geometry, strip=strip, homomorphic=homomorphic, filtered=filtered,
        model=model, thresholds=thresholds, sliced=sliced, selection=selection,
        curves=curves, code=code,
    )
    result.warnings = _collect_warnings(result)
    logger.debug("Extracted %dx%d code, thresholds=%s, warnings=%s",
                 code.m, code.n, ["%.3f" % t for t in thresholds.t], result.warnings)
    return result


def extract_entry(entry: ManifestEntry, config: PipelineConfig) -> PipelineResult:
    """Load a manifest entry's image and run the pipeline on it"""
    img = load_gray(entry.path)
    return extract_code(img, resolve_geometry(img, entry), config)
