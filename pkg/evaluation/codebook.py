"""
Per-entry shape code cache for the evaluation harness.
Every manifest entry goes through the pipeline once; repetitions reuse the codes.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional

from app.models import ManifestEntry, PipelineConfig
from app.pipeline import extract_entry
from app.shapecode import ShapeCode

logger = logging.getLogger(__name__)


class CodeBook:
    def __init__(self, config: PipelineConfig, threads: Optional[int] = None):
        self.config = config
        self.threads = threads or config.threads
        self.codes: Dict[str, ShapeCode] = {}
        self.warnings: Dict[str, List[str]] = {}
        self._lock = threading.Lock()

    def put(self, entry: ManifestEntry, code: ShapeCode, warnings: Optional[List[str]] = None):
        with self._lock:
            self.codes[entry.path] = code
            self.warnings[entry.path] = list(warnings or [])

    def get(self, entry: ManifestEntry) -> ShapeCode:
        code = self.codes.get(entry.path)
        if code is None:
            result = extract_entry(entry, self.config)
            with self._lock:
                # Another worker may have finished the same entry first
                code = self.codes.setdefault(entry.path, result.code)
                self.warnings.setdefault(entry.path, result.warnings)
        return code

    def warm(self, entries: Iterable[ManifestEntry]) -> None:
        """Extract every missing code, in parallel when threads > 1"""
        pending = [e for e in entries if e.path not in self.codes]
        if not pending:
            return
        logger.info("Extracting %d shape codes with %d thread(s)", len(pending), self.threads)
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(self.get, pending))
        else:
            for e in pending:
                self.get(e)

    def degraded_count(self) -> int:
        return sum(1 for c in self.codes.values() if c.degraded)
