import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

from app.errors import IrisError, ManifestError
from app.imaging import load_manifest
from app.models import ManifestEntry, PipelineConfig
from app.pipeline import PipelineResult, extract_entry
from app.shapecode import save_code
from app.utils.files import atomic_write_json
from app.utils.validation import sanitize_filename

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 3
MAX_FAILURE_SHARE = 0.10
SIDECAR = "enrollment.json"


def register(subparsers, parents):
    p = subparsers.add_parser("enroll", parents=parents, help="Extract one shape code per manifest entry")
    p.add_argument("manifest", help="JSON manifest of images")
    p.set_defaults(func=run)
    return p


def code_file_names(entries: List[ManifestEntry]) -> List[str]:
    """{subject}_{eye}_{session}_{index}.shpc, index counting within (subject, eye, session)"""
    seen: Dict[Tuple[str, str, str], int] = defaultdict(int)
    names = []
    for e in entries:
        key = (e.subject_id, e.eye, e.session)
        names.append(sanitize_filename(f"{e.subject_id}_{e.eye}_{e.session}_{seen[key]}.shpc"))
        seen[key] += 1
    return names


def _extract(entry: ManifestEntry, config: PipelineConfig) -> Tuple[Optional[PipelineResult], Optional[str]]:
    try:
        return extract_entry(entry, config), None
    except IrisError as e:
        logger.error("Skipping %s: %s", entry.path, e)
        return None, str(e)


def run(args, config: PipelineConfig) -> int:
    manifest = load_manifest(args.manifest)
    if not manifest.entries:
        raise ManifestError(f"Manifest {args.manifest} has no entries")
    os.makedirs(args.out, exist_ok=True)

    entries = manifest.entries
    names = code_file_names(entries)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(lambda e: _extract(e, config), entries))
    else:
        outcomes = [_extract(e, config) for e in entries]

    log = []
    failed = 0
    for entry, name, (result, error) in zip(entries, names, outcomes):
        record = {"path": entry.path, "subject_id": entry.subject_id, "eye": entry.eye, "session": entry.session}
        if result is None:
            failed += 1
            record.update(status="failed", error=error)
        else:
            save_code(result.code, os.path.join(args.out, name))
            record.update(status="ok", code=name, degraded=result.code.degraded, warnings=result.warnings)
        log.append(record)

    atomic_write_json(os.path.join(args.out, SIDECAR), {
        "seed": config.seed,
        "config": config.model_dump(mode="json"),
        "enrolled": len(entries) - failed,
        "failed": failed,
        "entries": log,
    })
    logger.info("Enrolled %d of %d entries into %s", len(entries) - failed, len(entries), args.out)
    if failed > MAX_FAILURE_SHARE * len(entries):
        logger.error("%d of %d entries failed (more than %.0f%%)", failed, len(entries), 100 * MAX_FAILURE_SHARE)
        return EXIT_PARTIAL
    return EXIT_OK
