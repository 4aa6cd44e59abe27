"""
Evaluation report model and its CSV/JSON emitters.

rank_accuracy is the cumulative match characteristic: accuracy at rank r is the
share of probes whose true class appears among the r best-ranked subjects.
The ROC table (FAR/FRR over HD thresholds) is written separately.
"""
import csv
import io
import logging
import math
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.errors import ScenarioError
from app.models import Scenario
from app.utils.files import atomic_write_text

logger = logging.getLogger(__name__)

ROC_POINTS = 101
WORST_CLASSES = 5


class RankPoint(BaseModel):
    rank: int
    accuracy: float
    std: float


class Histogram(BaseModel):
    edges: List[float]
    mass: List[float]


class RocPoint(BaseModel):
    threshold: float
    far: float
    frr: float


class ClassAccuracy(BaseModel):
    class_id: str
    accuracy: float


class EvalReport(BaseModel):
    session: str
    scenario: Scenario
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    classes: int = 0
    rank_accuracy: List[RankPoint] = Field(default_factory=list)
    genuine_per_repetition: List[int] = Field(default_factory=list)
    impostor_per_repetition: List[int] = Field(default_factory=list)
    intra_hd: Optional[Histogram] = None
    inter_hd: Optional[Histogram] = None
    decidability: Optional[float] = None
    roc: List[RocPoint] = Field(default_factory=list)
    eer: Optional[float] = None
    per_class: List[ClassAccuracy] = Field(default_factory=list)
    degraded_excluded: int = 0
    # Raw score pools stay in memory only
    genuine_scores: List[float] = Field(default_factory=list, exclude=True)
    impostor_scores: List[float] = Field(default_factory=list, exclude=True)

    @property
    def rank1(self) -> RankPoint:
        return self.rank_accuracy[0]

    def file_stem(self) -> str:
        return f"{self.session}_{self.scenario.k_train}train"


def rank_curve(report: EvalReport) -> List[Tuple[int, float, float]]:
    return [(p.rank, p.accuracy, p.std) for p in report.rank_accuracy]


def _histogram(scores: np.ndarray, bins: int) -> Histogram:
    counts, edges = np.histogram(scores, bins=bins, range=(0.0, 1.0))
    return Histogram(edges=edges.tolist(), mass=(counts / counts.sum()).tolist())


def decidability(genuine: np.ndarray, impostor: np.ndarray) -> Optional[float]:
    """d' = |mu_inter - mu_intra| / sqrt((var_intra + var_inter) / 2); None when both pools are constant"""
    spread = math.sqrt((float(np.var(genuine)) + float(np.var(impostor))) / 2.0)
    gap = abs(float(np.mean(impostor)) - float(np.mean(genuine)))
    if spread == 0.0:
        return None if gap == 0.0 else math.inf
    return gap / spread


def hd_distributions(report: EvalReport, bins: int = 50) -> Tuple[Histogram, Histogram, Optional[float]]:
    """Unit-mass genuine (intra) and impostor (inter) HD histograms over [0, 1], plus d'"""
    if not report.genuine_scores or not report.impostor_scores:
        raise ScenarioError("HD distributions need at least one genuine and one impostor score")
    genuine = np.asarray(report.genuine_scores)
    impostor = np.asarray(report.impostor_scores)
    return _histogram(genuine, bins), _histogram(impostor, bins), decidability(genuine, impostor)


def roc_curve(genuine: np.ndarray, impostor: np.ndarray, points: int = ROC_POINTS) -> Tuple[List[RocPoint], float]:
    """FAR(t) = share of impostors with HD <= t, FRR(t) = share of genuines with HD > t; EER where they meet"""
    thresholds = np.linspace(0.0, 1.0, points)
    far = (np.asarray(impostor)[None, :] <= thresholds[:, None]).mean(axis=1)
    frr = (np.asarray(genuine)[None, :] > thresholds[:, None]).mean(axis=1)
    i = int(np.argmin(np.abs(far - frr)))
    roc = [RocPoint(threshold=float(t), far=float(a), frr=float(r)) for t, a, r in zip(thresholds, far, frr)]
    return roc, float((far[i] + frr[i]) / 2.0)


def _csv_text(header: List[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_report(report: EvalReport, out_dir: str) -> List[str]:
    """Write {session}_{k}train.csv (rank curve), _roc.csv and .json into out_dir"""
    stem = os.path.join(out_dir, report.file_stem())
    paths = [
        atomic_write_text(stem + ".csv", _csv_text(
            ["rank", "accuracy", "std"],
            [(r, f"{a:.6f}", f"{s:.6f}") for r, a, s in rank_curve(report)])),
        atomic_write_text(stem + "_roc.csv", _csv_text(
            ["threshold", "far", "frr"],
            [(f"{p.threshold:.2f}", f"{p.far:.6f}", f"{p.frr:.6f}") for p in report.roc])),
        atomic_write_text(stem + ".json", report.model_dump_json(indent=2) + "\n"),
    ]
    logger.info("Wrote %s report to %s", report.file_stem(), out_dir)
    return paths


def write_comparison(reports: List[EvalReport], out_dir: str) -> str:
    rows = [(r.session, r.scenario.k_train, f"{r.rank1.accuracy:.6f}", f"{r.rank1.std:.6f}") for r in reports]
    return atomic_write_text(os.path.join(out_dir, "comparison.csv"),
                             _csv_text(["session", "k_train", "rank1_accuracy", "rank1_std"], rows))
