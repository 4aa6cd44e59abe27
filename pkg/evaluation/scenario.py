"""
Train/test scenario runner.

Each repetition draws k_train gallery images per class (uniformly, without
replacement, from n_per_class subsampled slots), classifies every remaining
image by nearest neighbour and records the rank of its true class.
"""
import logging
from collections import defaultdict
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.errors import PairingError, ScenarioError
from app.matching import GalleryEntry, fuse_codes, rank_subjects, score_gallery
from app.models import DatasetManifest, ManifestEntry, PipelineConfig, Scenario
from app.shapecode import ShapeCode
from evaluation.codebook import CodeBook
from evaluation.report import (
    WORST_CLASSES,
    ClassAccuracy,
    EvalReport,
    RankPoint,
    hd_distributions,
    roc_curve,
    write_comparison,
    write_report,
)

logger = logging.getLogger(__name__)

SESSIONS = ("VL", "NIR", "FUSED")


def _by_class(entries: Sequence[ManifestEntry]) -> Dict[str, List[ManifestEntry]]:
    grouped: Dict[str, List[ManifestEntry]] = defaultdict(list)
    for e in entries:
        grouped[e.class_id].append(e)
    return {cid: sorted(items, key=lambda e: e.path) for cid, items in sorted(grouped.items())}


def class_slots(manifest: DatasetManifest, session: str, n_per_class: int) -> Dict[str, List[List[ManifestEntry]]]:
    """
    Image slots per class. A slot holds one entry, or a (VL, NIR) pair for FUSED,
    paired by sorted order within the class.
    """
    if session not in SESSIONS:
        raise ScenarioError(f"Unknown session {session!r}; expected one of {SESSIONS}")
    if session != "FUSED":
        grouped = _by_class(manifest.for_session(session))
        if not grouped:
            raise ScenarioError(f"Manifest has no {session} entries")
        slots = {cid: [[e] for e in items] for cid, items in grouped.items()}
    else:
        vl = _by_class(manifest.for_session("VL"))
        nir = _by_class(manifest.for_session("NIR"))
        if not vl or set(vl) != set(nir):
            missing = sorted(set(vl) ^ set(nir)) or ["<all>"]
            raise PairingError(f"FUSED needs VL and NIR images for every class; unpaired: {', '.join(missing)}")
        slots = {}
        for cid in vl:
            if len(vl[cid]) != len(nir[cid]):
                raise PairingError(f"Class {cid} has {len(vl[cid])} VL but {len(nir[cid])} NIR images")
            slots[cid] = [[a, b] for a, b in zip(vl[cid], nir[cid])]

    short = [cid for cid, s in slots.items() if len(s) < n_per_class]
    if short:
        raise ScenarioError(f"{len(short)} classes have fewer than {n_per_class} {session} images: {', '.join(short[:5])}")
    if len(slots) < 2:
        raise ScenarioError("Scenario needs at least two classes")
    return slots


def _slot_code(slot: List[ManifestEntry], codebook: CodeBook) -> ShapeCode:
    if len(slot) == 1:
        return codebook.get(slot[0])
    return fuse_codes(codebook.get(slot[0]), codebook.get(slot[1]))


def run_scenario(
    manifest: DatasetManifest,
    session: str,
    scenario: Scenario,
    config: PipelineConfig,
    codebook: Optional[CodeBook] = None,
    exclude_degraded: bool = False,
    bins: int = 50,
) -> EvalReport:
    slots = class_slots(manifest, session, scenario.n_per_class)
    codebook = codebook or CodeBook(config)
    codebook.warm([e for items in slots.values() for slot in items for e in slot])
    codes = {cid: [_slot_code(slot, codebook) for slot in items] for cid, items in slots.items()}

    class_ids = sorted(codes)
    n_classes = len(class_ids)
    k, n = scenario.k_train, scenario.n_per_class
    hits = np.zeros((scenario.repetitions, n_classes), dtype=np.float64)  # cumulative, filled below
    rank_hist = np.zeros((scenario.repetitions, n_classes + 1), dtype=np.int64)
    class_hits = defaultdict(list)
    genuine: List[float] = []
    impostor: List[float] = []
    genuine_counts, impostor_counts = [], []
    excluded = 0
    scored_reps: List[int] = []

    for rep in range(scenario.repetitions):
        rng = np.random.default_rng([scenario.seed, rep])
        gallery: List[GalleryEntry] = []
        probes = []
        for cid in class_ids:
            chosen = rng.permutation(len(codes[cid]))[:n]
            eye = slots[cid][0][0].eye
            for i in chosen[:k]:
                gallery.append(GalleryEntry(subject_id=cid, eye=eye, session=session, code=codes[cid][i]))
            probes.extend((cid, codes[cid][i]) for i in chosen[k:])

        if exclude_degraded:
            before = len(gallery) + len(probes)
            gallery = [g for g in gallery if not g.code.degraded]
            probes = [(cid, c) for cid, c in probes if not c.degraded]
            excluded += before - len(gallery) - len(probes)
            admitted = {g.subject_id for g in gallery}
            orphans = [p for p in probes if p[0] not in admitted]
            if orphans:
                logger.debug("Repetition %d: %d probes lost their whole gallery class", rep, len(orphans))
                probes = [p for p in probes if p[0] in admitted]
                excluded += len(orphans)
            if not gallery or not probes:
                logger.warning("Repetition %d skipped: nothing left to compare after excluding degraded codes", rep)
                genuine_counts.append(0)
                impostor_counts.append(0)
                continue

        rep_genuine = rep_impostor = 0
        for cid, probe in probes:
            scored = score_gallery(probe, gallery, align=config.align, max_shift=config.max_shift,
                                   floor=config.epsilon_floor, threads=config.threads)
            for entry, score in scored:
                if entry.subject_id == cid:
                    genuine.append(score.hd)
                    rep_genuine += 1
                else:
                    impostor.append(score.hd)
                    rep_impostor += 1
            ranked = [sid for sid, _ in rank_subjects(scored)]
            rank = ranked.index(cid) + 1 if cid in ranked else n_classes + 1
            rank_hist[rep, min(rank, n_classes + 1) - 1] += 1
            class_hits[cid].append(1.0 if rank == 1 else 0.0)
        genuine_counts.append(rep_genuine)
        impostor_counts.append(rep_impostor)

        n_probes = max(len(probes), 1)
        hits[rep] = np.cumsum(rank_hist[rep, :n_classes]) / n_probes
        scored_reps.append(rep)
        logger.debug("Repetition %d: rank-1 %.3f over %d probes", rep, hits[rep, 0], len(probes))

    if not scored_reps:
        raise ScenarioError(f"{session}: every repetition was left without gallery or probes")
    mean, std = hits[scored_reps].mean(axis=0), hits[scored_reps].std(axis=0)
    report = EvalReport(
        session=session,
        scenario=scenario,
        config=config.model_dump(mode="json"),
        seed=scenario.seed,
        classes=n_classes,
        rank_accuracy=[RankPoint(rank=r + 1, accuracy=float(mean[r]), std=float(std[r])) for r in range(n_classes)],
        genuine_per_repetition=genuine_counts,
        impostor_per_repetition=impostor_counts,
        degraded_excluded=excluded,
        genuine_scores=genuine,
        impostor_scores=impostor,
    )
    worst = sorted((float(np.mean(v)), cid) for cid, v in class_hits.items())[:WORST_CLASSES]
    report.per_class = [ClassAccuracy(class_id=cid, accuracy=acc) for acc, cid in worst]

    if genuine and impostor:
        report.intra_hd, report.inter_hd, report.decidability = hd_distributions(report, bins)
        report.roc, report.eer = roc_curve(np.asarray(genuine), np.asarray(impostor))
    else:
        logger.warning("Empty genuine or impostor pool; HD distributions skipped")

    logger.info("%s k=%d: rank-1 %.4f +/- %.4f over %d repetitions",
                session, k, report.rank1.accuracy, report.rank1.std, scenario.repetitions)
    return report


def run_table(
    manifest: DatasetManifest,
    sessions: Sequence[str],
    config: PipelineConfig,
    n_per_class: int = 5,
    repetitions: int = 20,
    seed: int = 0,
    out_dir: Optional[str] = None,
    codebook: Optional[CodeBook] = None,
    exclude_degraded: bool = False,
    bins: int = 50,
) -> List[EvalReport]:
    """Every k = 1..n_per_class-1 scenario for each session; writes comparison.csv when out_dir is set"""
    codebook = codebook or CodeBook(config)
    reports = []
    for session in sessions:
        for k in range(1, n_per_class):
            scenario = Scenario(k_train=k, n_per_class=n_per_class, repetitions=repetitions, seed=seed)
            report = run_scenario(manifest, session, scenario, config, codebook=codebook,
                                  exclude_degraded=exclude_degraded, bins=bins)
            if out_dir:
                write_report(report, out_dir)
            reports.append(report)
    if out_dir:
        write_comparison(reports, out_dir)
    return reports
