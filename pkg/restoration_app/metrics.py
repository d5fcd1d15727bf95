"""
Band-averaged PSNR and SSIM, and the spectral angle mapper.

All functions take [H, W, D] arrays (or Tensors) with values nominally in
[0, data_range].
"""
from dataclasses import asdict, dataclass

import numpy as np
from skimage.metrics import structural_similarity

from hsdt_app.autograd import Tensor
from hsdt_app.conf import hsdt_settings
from hsdt_app.exceptions import NumericalError, ShapeError


def _pair(ref, est):
    ref = np.asarray(ref.data if isinstance(ref, Tensor) else ref, dtype=np.float64)
    est = np.asarray(est.data if isinstance(est, Tensor) else est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ShapeError(f"reference {ref.shape} and estimate {est.shape} differ")
    if ref.ndim != 3:
        raise ShapeError(f"expected [H, W, D], got {ref.shape}", axis='rank')
    return ref, est


def band_psnr(ref, est, data_range=1.0, cap=None):
    """
    PSNR of every band, capped (identical bands give exactly `cap`).

    Returns:
        np.ndarray: [D] values in dB.
    """
    cap = hsdt_settings.PSNR_CAP if cap is None else cap
    ref, est = _pair(ref, est)
    mse = np.mean((ref - est) ** 2, axis=(0, 1))
    values = np.full(mse.shape, float(cap))
    positive = mse > 0
    values[positive] = np.minimum(cap, 10.0 * np.log10(data_range ** 2 / mse[positive]))
    return values


def psnr(ref, est, data_range=1.0, cap=None):
    """Mean over bands of the per-band PSNR."""
    return float(np.mean(band_psnr(ref, est, data_range, cap)))


def ssim(ref, est, window=None, sigma=None, k1=None, k2=None, data_range=1.0):
    """
    Gaussian-windowed SSIM per band, averaged over pixels then bands.

    Raises:
        ShapeError: Image smaller than the window.
    """
    window = hsdt_settings.SSIM_WINDOW if window is None else window
    sigma = hsdt_settings.SSIM_SIGMA if sigma is None else sigma
    k1 = hsdt_settings.SSIM_K1 if k1 is None else k1
    k2 = hsdt_settings.SSIM_K2 if k2 is None else k2
    ref, est = _pair(ref, est)
    height, width = ref.shape[:2]
    if height < window or width < window:
        raise ShapeError(f"image {height}x{width} is smaller than the {window}x{window} SSIM window")

    values = [
        structural_similarity(ref[..., band], est[..., band], win_size=window, gaussian_weights=True,
                              sigma=sigma, use_sample_covariance=False, K1=k1, K2=k2, data_range=data_range)
        for band in range(ref.shape[-1])
    ]
    return float(np.mean(values))


def spectral_angles(ref, est):
    """
    Per-pixel spectral angle in radians.

    Returns:
        tuple[np.ndarray, int]: Angles of the pixels where both spectra are
        non-zero, and the number of pixels skipped.
    """
    ref, est = _pair(ref, est)
    ref = ref.reshape(-1, ref.shape[-1])
    est = est.reshape(-1, est.shape[-1])
    norms = np.linalg.norm(ref, axis=1) * np.linalg.norm(est, axis=1)
    valid = norms > 0
    cosine = np.clip(np.sum(ref[valid] * est[valid], axis=1) / norms[valid], -1.0, 1.0)
    return np.arccos(cosine), int((~valid).sum())


def _mean_angle(ref, est):
    angles, skipped = spectral_angles(ref, est)
    if angles.size == 0:
        raise NumericalError(f"SAM is undefined: all {skipped} pixels have a zero spectrum.")
    return float(np.mean(angles)), skipped


def sam(ref, est):
    """
    Mean spectral angle in radians, skipping zero-spectrum pixels.

    Raises:
        NumericalError: Every pixel has a zero spectrum.
    """
    return _mean_angle(ref, est)[0]


@dataclass
class MetricReport:
    """
    Quality of one estimate.

    Attributes:
        psnr (float): dB, band averaged.
        ssim (float): Band averaged.
        sam (float): Radians, pixel averaged.
        skipped_pixels (int): Pixels left out of SAM for a zero spectrum.
    """
    psnr: float
    ssim: float
    sam: float
    skipped_pixels: int = 0
    name: str = ''

    def as_dict(self):
        return asdict(self)


def evaluate(ref, est, data_range=1.0, name=''):
    angle, skipped = _mean_angle(ref, est)
    return MetricReport(
        psnr=psnr(ref, est, data_range),
        ssim=ssim(ref, est, data_range=data_range),
        sam=angle,
        skipped_pixels=skipped,
        name=name,
    )
