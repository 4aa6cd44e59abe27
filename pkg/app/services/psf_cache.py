"""
PSF Spectrum Cache
Holds the zero-padded PSF spectrum per (psf_variance, psf_size, rows, cols) so
every strip of a batch reuses one FFT. Entries are read-only and shared across
worker threads. At most MAX_SPECTRA shapes are kept; the oldest is evicted first.
"""

import logging
import threading
from typing import Dict, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MAX_SPECTRA = 32

_spectra: Dict[Tuple[float, int, int, int], np.ndarray] = {}
_spectra_lock = threading.Lock()


def gaussian_kernel(psf_variance: float, size: int) -> np.ndarray:
    half = size // 2
    axis = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(axis ** 2) / (2.0 * psf_variance))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _pad_and_transform(kernel: np.ndarray, rows: int, cols: int) -> np.ndarray:
    padded = np.zeros((rows, cols), dtype=np.float64)
    k = kernel.shape[0]
    padded[:k, :k] = kernel
    # Kernel centre moved to (0, 0) so the spectrum of the symmetric PSF carries no phase
    padded = np.roll(padded, shift=(-(k // 2), -(k // 2)), axis=(0, 1))
    return np.fft.fft2(padded)


def get_psf_spectrum(psf_variance: float, size: int, rows: int, cols: int) -> np.ndarray:
    """Get or create the cached spectrum of the centered, unit-sum Gaussian PSF"""
    key = (float(psf_variance), int(size), int(rows), int(cols))
    spectrum = _spectra.get(key)
    if spectrum is None:
        with _spectra_lock:
            # Double-check after acquiring lock
            spectrum = _spectra.get(key)
            if spectrum is None:
                logger.debug("Computing PSF spectrum variance=%.3f size=%d shape=%dx%d", *key)
                spectrum = _pad_and_transform(gaussian_kernel(psf_variance, size), rows, cols)
                spectrum.setflags(write=False)
                while len(_spectra) >= MAX_SPECTRA:
                    _spectra.pop(next(iter(_spectra)))
                _spectra[key] = spectrum
    return spectrum
