"""
Illumination/reflectance enhancement and Tikhonov low-pass filtering.

The Tikhonov filter works in the Fourier domain: with P the spectrum of the
centered Gaussian PSF and B the image spectrum, the output spectrum is
conj(P) * B / (|P|^2 + lambda^2). Per frequency this is the classic filter
factor |P|^2 / (|P|^2 + lambda^2) applied to the naive inverse B / P.
"""
import logging
from dataclasses import dataclass

import numpy as np

from app.errors import EnhanceError
from app.imaging import GrayImage
from app.models import TikhonovParams
from app.services.psf_cache import gaussian_kernel, get_psf_spectrum

logger = logging.getLogger(__name__)

LOG_EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class FilterResponse:
    """Per-frequency gains F_i, laid out like np.fft.fft2 output"""
    gains: np.ndarray


def _rescale(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 0.0:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def homomorphic_enhance(img: GrayImage) -> GrayImage:
    """
    Logarithmic enhancement: log, normalize to [0, 1], exponentiate, normalize again.

    Strictly monotone in the input intensity. A constant image maps to 0.5.
    """
    g = np.log(img.data + LOG_EPSILON)
    if float(g.max() - g.min()) <= 0.0:
        return GrayImage(np.full(img.shape, 0.5))
    out = _rescale(np.exp(_rescale(g)))
    return GrayImage(np.clip(out, 0.0, 1.0))


def psf_kernel(params: TikhonovParams) -> np.ndarray:
    return gaussian_kernel(params.psf_variance, params.kernel_size)


def padded_psf_spectrum(params: TikhonovParams, rows: int, cols: int) -> np.ndarray:
    size = params.kernel_size
    if rows < size or cols < size:
        raise EnhanceError(f"Image {rows}x{cols} is smaller than the {size}x{size} PSF kernel")
    return get_psf_spectrum(params.psf_variance, size, rows, cols)


def tikhonov_response(params: TikhonovParams, rows: int, cols: int) -> FilterResponse:
    """Filter factors |P|^2 / (|P|^2 + lambda^2); zero where both terms vanish"""
    power = np.abs(padded_psf_spectrum(params, rows, cols)) ** 2
    denom = power + params.lam ** 2
    gains = np.divide(power, denom, out=np.zeros_like(power), where=denom > 0)
    return FilterResponse(np.clip(gains, 0.0, 1.0))


def apply_tikhonov(data: np.ndarray, params: TikhonovParams) -> np.ndarray:
    """Unclamped Tikhonov-regularized output of a real 2D array (linear in data)"""
    rows, cols = data.shape
    psf = padded_psf_spectrum(params, rows, cols)
    denom = np.abs(psf) ** 2 + params.lam ** 2
    numer = np.conj(psf) * np.fft.fft2(data)
    spectrum = np.divide(numer, denom, out=np.zeros_like(numer), where=denom > 0)
    out = np.fft.ifft2(spectrum)
    residue = float(np.abs(out.imag).max())
    if residue > 1e-9:
        logger.debug("Discarding imaginary residue %.3g from Tikhonov output", residue)
    return out.real


def tikhonov_filter(img: GrayImage, params: TikhonovParams) -> GrayImage:
    out = apply_tikhonov(img.data, params)
    return GrayImage(np.clip(out, 0.0, 1.0))


def enhance_image(img: GrayImage, params: TikhonovParams) -> GrayImage:
    """Homomorphic enhancement followed by Tikhonov filtering"""
    return tikhonov_filter(homomorphic_enhance(img), params)
