import glob
import logging
import os
import sys
from typing import List

from app.errors import GalleryError
from app.matching import GalleryEntry, classify_nn
from app.models import PipelineConfig
from app.shapecode import DEFAULT_M, load_code

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    p = subparsers.add_parser("match", parents=parents, help="Rank gallery subjects against a probe code")
    p.add_argument("probe", help="Probe .shpc file")
    p.add_argument("gallery_dir", help="Directory of enrolled .shpc files")
    p.add_argument("--top", type=int, default=None, help="Print only the first N ranks")
    p.set_defaults(func=run)
    return p


def entry_from_file(path: str) -> GalleryEntry:
    """Subject, eye and session come from the {subject}_{eye}_{session}_{index}.shpc name"""
    stem = os.path.splitext(os.path.basename(path))[0]
    parts = stem.rsplit("_", 3)
    code = load_code(path)
    if len(parts) == 4 and parts[1] in ("L", "R"):
        subject, eye, session, _ = parts
        return GalleryEntry(subject_id=f"{subject}_{eye}", eye=eye, session=session, code=code, source=path)
    session = "FUSED" if code.m > DEFAULT_M else "VL"
    return GalleryEntry(subject_id=stem, eye="L", session=session, code=code, source=path)


def load_gallery(gallery_dir: str) -> List[GalleryEntry]:
    paths = sorted(glob.glob(os.path.join(gallery_dir, "*.shpc")))
    if not paths:
        raise GalleryError(f"No .shpc files in {gallery_dir}")
    return [entry_from_file(p) for p in paths]


def run(args, config: PipelineConfig) -> int:
    probe = load_code(args.probe)
    gallery = load_gallery(args.gallery_dir)
    ranked = classify_nn(probe, gallery, align=config.align, max_shift=config.max_shift,
                         floor=config.epsilon_floor, admit_degraded=config.admit_degraded,
                         threads=config.threads)
    if args.top:
        ranked = ranked[:args.top]

    out = sys.stdout
    out.write("rank\tsubject\thd\tshift\n")
    for rank, (subject, score) in enumerate(ranked, start=1):
        out.write(f"{rank}\t{subject}\t{score.hd:.6f}\t{score.shift_used}\n")
    logger.info("Matched %s against %d gallery codes (align=%s, seed=%d)",
                args.probe, len(gallery), config.align, config.seed)
    return 0
