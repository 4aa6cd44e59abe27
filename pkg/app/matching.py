"""
Product-of-sums Hamming matching, session fusion and nearest-neighbour ranking.

Per strip i the distance is the fraction of differing bits, d_i = popcount(a_i XOR b_i) / (n b).
The code distance is the geometric mean of the strips, HD = (prod_i max(d_i, eps))^(1/m)
with eps = 1 / (n b), so one exactly matching strip cannot pull HD to zero.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimensionMismatchError, GalleryError
from app.shapecode import SESSIONS, ShapeCode

logger = logging.getLogger(__name__)

DEFAULT_MAX_SHIFT = 10


@dataclass(frozen=True, eq=False)
class MatchScore:
    hd: float
    per_feature: np.ndarray
    shift_used: int = 0


@dataclass(frozen=True, eq=False)
class GalleryEntry:
    subject_id: str
    eye: str
    session: Literal["VL", "NIR", "FUSED"]
    code: ShapeCode
    source: Optional[str] = None

    @property
    def name(self) -> str:
        return self.source or f"{self.subject_id}/{self.eye}/{self.session}"


def epsilon(code: ShapeCode) -> float:
    return 1.0 / (code.n * code.b)


def strip_distances(a: np.ndarray, b: np.ndarray, bits: int) -> np.ndarray:
    """Fraction of differing bits per strip for two (m, n) sample matrices"""
    diff = np.bitwise_xor(a, b)
    per_sample = np.unpackbits(diff.view(np.uint8), axis=1).reshape(diff.shape[0], -1)
    return per_sample.sum(axis=1) / float(diff.shape[1] * bits)


def combine(per_feature: np.ndarray, eps: float, floor: bool = True) -> float:
    """Geometric mean of the strip distances, floored at eps unless floor is off"""
    d = np.asarray(per_feature, dtype=np.float64)
    if floor:
        d = np.maximum(d, eps)
    elif np.any(d == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(d))))


def _check_dims(a: ShapeCode, b: ShapeCode, name: str = "gallery code") -> None:
    if a.dims != b.dims:
        raise DimensionMismatchError(f"{name} has (m, n, b) = {b.dims}, probe has {a.dims}")


def pos_hamming(
    a: ShapeCode,
    b: ShapeCode,
    align: str = "off",
    max_shift: int = DEFAULT_MAX_SHIFT,
    floor: bool = True,
) -> MatchScore:
    """
    Score two codes of equal (m, n, b).

    With align="shift" every strip of b is rolled by s in [-max_shift, max_shift]
    samples and the smallest HD wins; ties prefer the smallest |s|, then negative s.
    """
    _check_dims(a, b)
    eps = epsilon(a)
    if align in ("off", None):
        d = strip_distances(a.strips, b.strips, a.b)
        return MatchScore(combine(d, eps, floor), d, 0)
    if align not in ("shift", "shift-search"):
        raise ValueError(f"Unknown align mode {align!r}")

    best: Optional[Tuple[Tuple[float, int, int], MatchScore]] = None
    for s in range(-max_shift, max_shift + 1):
        d = strip_distances(a.strips, np.roll(b.strips, s, axis=1), a.b)
        score = MatchScore(combine(d, eps, floor), d, s)
        key = (score.hd, abs(s), s)
        if best is None or key < best[0]:
            best = (key, score)
    return best[1]


def fuse_codes(vl: ShapeCode, nir: ShapeCode) -> ShapeCode:
    """Concatenate VL strips then NIR strips; labels gain a session prefix"""
    if (vl.n, vl.b) != (nir.n, nir.b):
        raise DimensionMismatchError(f"Cannot fuse (n, b) = {(vl.n, vl.b)} with {(nir.n, nir.b)}")
    labels = tuple(f"{SESSIONS[0]}.{l}" for l in vl.labels) + tuple(f"{SESSIONS[1]}.{l}" for l in nir.labels)
    return ShapeCode(np.vstack([vl.strips, nir.strips]), b=vl.b,
                     degraded=vl.degraded or nir.degraded, labels=labels)


def score_gallery(
    probe: ShapeCode,
    gallery: Sequence[GalleryEntry],
    align: str = "off",
    max_shift: int = DEFAULT_MAX_SHIFT,
    floor: bool = True,
    admit_degraded: bool = True,
    threads: int = 1,
) -> List[Tuple[GalleryEntry, MatchScore]]:
    """Score the probe against every admitted gallery entry, in gallery order"""
    entries = list(gallery)
    if not admit_degraded:
        kept = [e for e in entries if not e.code.degraded]
        if len(kept) < len(entries):
            logger.warning("Excluding %d degraded gallery codes", len(entries) - len(kept))
        entries = kept
    if not entries:
        raise GalleryError("Gallery is empty")
    for e in entries:
        _check_dims(probe, e.code, e.name)

    def _score(entry: GalleryEntry) -> MatchScore:
        return pos_hamming(probe, entry.code, align=align, max_shift=max_shift, floor=floor)

    if threads > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(_score, entries))
    else:
        scores = [_score(e) for e in entries]
    return list(zip(entries, scores))


def rank_subjects(scored: Sequence[Tuple[GalleryEntry, MatchScore]]) -> List[Tuple[str, MatchScore]]:
    """Best (minimum HD) score per subject, sorted by HD then subject id"""
    best: Dict[str, MatchScore] = {}
    for entry, score in scored:
        current = best.get(entry.subject_id)
        if current is None or score.hd < current.hd:
            best[entry.subject_id] = score
    return sorted(best.items(), key=lambda item: (item[1].hd, item[0]))


def classify_nn(
    probe: ShapeCode,
    gallery: Sequence[GalleryEntry],
    align: str = "off",
    **options,
) -> List[Tuple[str, MatchScore]]:
    return rank_subjects(score_gallery(probe, gallery, align=align, **options))
