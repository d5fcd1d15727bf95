"""
Synthetic low-rank HSIs for desk-scale experiments and command defaults.
"""
import numpy as np
from scipy import ndimage


def low_rank_hsi(height, width, bands, rank=3, seed=0, smoothness=2.0):
    """
    A [H, W, D] image in [0, 1] that is a mix of `rank` smooth spectra.

    Spectra are Gaussian bumps over the band axis; abundances are
    low-pass filtered noise normalized to sum to one per pixel.
    """
    if min(height, width, bands, rank) < 1:
        raise ValueError('Extents and rank must be at least 1.')
    rng = np.random.default_rng(seed)
    axis = np.linspace(0.0, 1.0, bands)
    centres = rng.uniform(0.0, 1.0, rank)
    widths = rng.uniform(0.15, 0.5, rank)
    spectra = 0.2 + 0.8 * np.exp(-(axis[None, :] - centres[:, None]) ** 2 / (2 * widths[:, None] ** 2))

    abundances = rng.random((height, width, rank))
    abundances = ndimage.gaussian_filter(abundances, sigma=(smoothness, smoothness, 0), mode='wrap')
    abundances = np.maximum(abundances, 1e-6)
    abundances /= abundances.sum(axis=-1, keepdims=True)
    return np.einsum('hwr,rd->hwd', abundances, spectra)


def dataset(count, height, width, bands, rank=3, seed=0):
    """`count` independent low-rank images."""
    return [low_rank_hsi(height, width, bands, rank, seed=[seed, index]) for index in range(count)]
