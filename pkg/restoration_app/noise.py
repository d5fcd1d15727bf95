"""
Seeded simulators for the hyperspectral degradations used in training and
evaluation: i.i.d. Gaussian (fixed, blind, or drawn from a set), non-i.i.d.
Gaussian, stripe, deadline, impulse, and their mixture.

Images are float arrays [H, W, D] in [0, 1]; sigmas are given on the 0-255
scale. Outputs are not clamped.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from hsdt_app.exceptions import NoiseSpecError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

GAUSSIAN = 'gaussian'
GAUSSIAN_BLIND = 'gaussian_blind'
GAUSSIAN_CHOICE = 'gaussian_choice'
NONIID = 'noniid'
STRIPE = 'stripe'
DEADLINE = 'deadline'
IMPULSE = 'impulse'
MIXTURE = 'mixture'

KIND_CHOICES = [
    (GAUSSIAN, 'i.i.d. Gaussian, fixed sigma'),
    (GAUSSIAN_BLIND, 'i.i.d. Gaussian, sigma drawn per image from a range'),
    (GAUSSIAN_CHOICE, 'i.i.d. Gaussian, sigma drawn per image from a set'),
    (NONIID, 'per-band Gaussian sigmas'),
    (STRIPE, 'non-i.i.d. Gaussian plus column offsets'),
    (DEADLINE, 'non-i.i.d. Gaussian plus zeroed columns'),
    (IMPULSE, 'non-i.i.d. Gaussian plus salt-and-pepper'),
    (MIXTURE, 'non-i.i.d. Gaussian plus stripe, impulse and deadline'),
]

GAUSSIAN_KINDS = (GAUSSIAN, GAUSSIAN_BLIND, GAUSSIAN_CHOICE)
COMPLEX_KINDS = (NONIID, STRIPE, DEADLINE, IMPULSE, MIXTURE)

# Stream purposes; one independent generator per (seed, key, purpose, band).
_SIGMA = 1
_GAUSS = 2
_BANDS = 3
_COLUMNS = 4
_OFFSETS = 5
_DENSITY = 6
_IMPULSE = 7
_DEADLINE = 8


class Rng:
    """
    Counter-based random source (Philox) addressed by a key path.

    Identical (seed, key, purpose, band) always yields the identical stream,
    and distinct bands never share one.
    """

    def __init__(self, seed, key=()):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise NoiseSpecError(f"Seed must be a 64-bit unsigned integer, got {seed}.")
        self.seed = seed
        self.key = tuple(int(k) for k in key)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"

    def child(self, *key):
        return Rng(self.seed, self.key + tuple(key))

    def stream(self, purpose, band=None):
        entropy = [self.seed, *self.key, purpose]
        if band is not None:
            entropy.append(band)
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _check_range(errors, name, value, low=0.0, high=1.0):
    lo, hi = value
    if not (low <= lo <= hi <= high):
        errors[name] = [f"Expected {low} <= low <= high <= {high}, got {tuple(value)}."]


@dataclass(frozen=True)
class NoiseSpec:
    """
    Declarative description of one degradation.

    Attributes:
        kind (str): One of KIND_CHOICES.
        seed (int): 64-bit seed of the default random source.
        sigma (float): Gaussian sigma (0-255 scale) for `gaussian`.
        sigma_range (tuple): Blind-sigma range for `gaussian_blind`.
        sigmas (tuple): Intensity set for `gaussian_choice` and the non-i.i.d. base.
        band_fraction (float): Share of bands hit by stripe/deadline/impulse.
        column_range (tuple): Share of columns hit on a striped or deadline band.
        stripe_amplitude (float): Column offsets are drawn from [-a, a].
        impulse_range (tuple): Per-band salt-and-pepper density range.
        salt_ratio (float): Share of impulse voxels set to 1 rather than 0.
    """
    kind: str
    seed: int = 0
    sigma: float = 50.0
    sigma_range: tuple = (10.0, 70.0)
    sigmas: tuple = (10.0, 30.0, 50.0, 70.0)
    band_fraction: float = 1 / 3
    column_range: tuple = (0.05, 0.15)
    stripe_amplitude: float = 0.25
    impulse_range: tuple = (0.1, 0.7)
    salt_ratio: float = 0.5

    def __post_init__(self):
        errors = {}
        if self.kind not in dict(KIND_CHOICES):
            errors['kind'] = [f"Unknown noise kind '{self.kind}'."]
        if self.sigma < 0:
            errors['sigma'] = ['Must not be negative.']
        _check_range(errors, 'sigma_range', self.sigma_range, high=np.inf)
        if not self.sigmas:
            errors['sigmas'] = ['Intensity set must not be empty.']
        elif min(self.sigmas) < 0:
            errors['sigmas'] = ['Sigmas must not be negative.']
        if not 0.0 <= self.band_fraction <= 1.0:
            errors['band_fraction'] = ['Must lie within [0, 1].']
        _check_range(errors, 'column_range', self.column_range)
        _check_range(errors, 'impulse_range', self.impulse_range)
        if not 0.0 <= self.salt_ratio <= 1.0:
            errors['salt_ratio'] = ['Must lie within [0, 1].']
        if self.stripe_amplitude < 0:
            errors['stripe_amplitude'] = ['Must not be negative.']
        if errors:
            raise NoiseSpecError(f"Invalid noise spec: {errors}")

    def as_dict(self):
        return asdict(self)


@dataclass
class DegradationLog:
    """
    Per-band record of what a simulator did.

    `bands[d]` is a list of corruption entries for band d, each a dict with a
    `type` key plus the parameters that were drawn (sigma, columns, offsets,
    density).
    """
    kind: str
    seed: int
    shape: tuple
    bands: list = field(default_factory=list)

    def __post_init__(self):
        if not self.bands:
            self.bands = [[] for _ in range(self.shape[-1])]

    def add(self, band, corruption, **details):
        self.bands[band].append({'type': corruption, **details})

    def affected(self, corruption):
        """Bands carrying at least one entry of the given type."""
        return [band for band, entries in enumerate(self.bands)
                if any(entry['type'] == corruption for entry in entries)]

    def entries(self, band, corruption):
        return [entry for entry in self.bands[band] if entry['type'] == corruption]

    def as_dict(self):
        return {'kind': self.kind, 'seed': self.seed, 'shape': list(self.shape), 'bands': self.bands}


def _as_image(x):
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"expected an HSI [H, W, D], got shape {x.shape}", axis='rank')
    if not np.all(np.isfinite(x)):
        raise NumericalError('Input image contains non-finite values.')
    return x


def _float_dtype(x):
    return x.dtype if np.issubdtype(x.dtype, np.floating) else np.dtype(np.float64)


def affected_band_count(bands, fraction):
    """round(bands * fraction), at least one band when the fraction is positive."""
    count = int(np.floor(bands * fraction + 0.5))
    if fraction > 0:
        count = max(1, count)
    return min(count, bands)


def column_count(width, column_range, generator):
    """Draw how many columns to corrupt: within the range's share of the width, at least one."""
    low = max(1, int(np.ceil(column_range[0] * width - 1e-9)))
    high = max(low, int(np.floor(column_range[1] * width + 1e-9)))
    return int(generator.integers(low, high + 1))


def _band_noise(rng, shape, band, sigma_255):
    height, width = shape[:2]
    return rng.stream(_GAUSS, band).standard_normal((height, width)) * (sigma_255 / 255.0)


def apply_gaussian(x, sigma_255, rng, log=None):
    """
    Add zero-mean i.i.d. Gaussian noise.

    Args:
        x (np.ndarray): Clean HSI [H, W, D].
        sigma_255 (float | tuple): Sigma on the 0-255 scale, or a (low, high)
            range from which one sigma is drawn for the whole image.
        rng (Rng): Random source.
        log (DegradationLog | None): Filled with the per-band sigma.

    Returns:
        np.ndarray: x + n, same dtype as x.

    Raises:
        NoiseSpecError: Negative sigma.
    """
    x = _as_image(x)
    if isinstance(sigma_255, (tuple, list)):
        low, high = sigma_255
        if low < 0 or high < low:
            raise NoiseSpecError(f"Invalid blind sigma range {tuple(sigma_255)}.")
        sigma_255 = float(rng.stream(_SIGMA).uniform(low, high))
    if sigma_255 < 0:
        raise NoiseSpecError(f"Sigma must not be negative, got {sigma_255}.")

    noisy = x.astype(np.float64, copy=True)
    for band in range(x.shape[-1]):
        if sigma_255 > 0:
            noisy[..., band] += _band_noise(rng, x.shape, band, sigma_255)
        if log is not None:
            log.add(band, GAUSSIAN, sigma=sigma_255)
    return noisy.astype(_float_dtype(x), copy=False)


def _choose_bands(spec, rng, bands, salt):
    count = affected_band_count(bands, spec.band_fraction)
    chosen = rng.stream(_BANDS, salt).choice(bands, size=count, replace=False)
    return sorted(int(b) for b in chosen)


def _noniid(noisy, spec, rng, log):
    sigmas = np.asarray(spec.sigmas, dtype=np.float64)
    for band in range(noisy.shape[-1]):
        sigma = float(rng.stream(_SIGMA, band).choice(sigmas))
        noisy[..., band] += _band_noise(rng, noisy.shape, band, sigma)
        log.add(band, NONIID, sigma=sigma)


def _stripe(noisy, spec, rng, log):
    width = noisy.shape[1]
    for band in _choose_bands(spec, rng, noisy.shape[-1], 0):
        generator = rng.stream(_COLUMNS, band)
        count = column_count(width, spec.column_range, generator)
        columns = np.sort(generator.choice(width, size=count, replace=False))
        offsets = rng.stream(_OFFSETS, band).uniform(-spec.stripe_amplitude, spec.stripe_amplitude, count)
        noisy[:, columns, band] += offsets
        log.add(band, STRIPE, columns=columns.tolist(), offsets=offsets.tolist())


def _impulse(noisy, spec, rng, log):
    height, width = noisy.shape[:2]
    for band in _choose_bands(spec, rng, noisy.shape[-1], 1):
        density = float(rng.stream(_DENSITY, band).uniform(*spec.impulse_range))
        generator = rng.stream(_IMPULSE, band)
        hit = generator.random((height, width)) < density
        salt = generator.random((height, width)) < spec.salt_ratio
        noisy[hit & salt, band] = 1.0
        noisy[hit & ~salt, band] = 0.0
        log.add(band, IMPULSE, density=density, salt_ratio=spec.salt_ratio, voxels=int(hit.sum()))


def _deadline(noisy, spec, rng, log):
    width = noisy.shape[1]
    for band in _choose_bands(spec, rng, noisy.shape[-1], 2):
        generator = rng.stream(_DEADLINE, band)
        count = column_count(width, spec.column_range, generator)
        columns = np.sort(generator.choice(width, size=count, replace=False))
        noisy[:, columns, band] = 0.0
        log.add(band, DEADLINE, columns=columns.tolist())


def apply_complex(x, spec, rng=None):
    """
    Apply one of the complex-noise recipes.

    Every kind starts from the non-i.i.d. Gaussian base (per-band sigma drawn
    from `spec.sigmas`). Stripe, impulse and deadline then each hit their own
    random subset of `band_fraction` of the bands; `mixture` applies all
    three, in that order, so deadline columns end up exactly zero.

    Returns:
        tuple[np.ndarray, DegradationLog]

    Raises:
        NoiseSpecError: If `spec.kind` is not a complex kind.
    """
    if spec.kind not in COMPLEX_KINDS:
        raise NoiseSpecError(f"'{spec.kind}' is not a complex noise kind.")
    x = _as_image(x)
    rng = rng or Rng(spec.seed)
    log = DegradationLog(spec.kind, rng.seed, x.shape)
    noisy = x.astype(np.float64, copy=True)

    _noniid(noisy, spec, rng, log)
    if spec.kind in (STRIPE, MIXTURE):
        _stripe(noisy, spec, rng, log)
    if spec.kind in (IMPULSE, MIXTURE):
        _impulse(noisy, spec, rng, log)
    if spec.kind in (DEADLINE, MIXTURE):
        _deadline(noisy, spec, rng, log)

    for corruption in (STRIPE, IMPULSE, DEADLINE):
        bands = log.affected(corruption)
        if bands:
            logger.debug("%s: bands %s", corruption, bands)
    return noisy.astype(_float_dtype(x), copy=False), log


def degrade(x, spec, rng=None):
    """
    Apply any NoiseSpec.

    Args:
        x (np.ndarray): Clean HSI [H, W, D].
        spec (NoiseSpec): What to apply.
        rng (Rng | None): Random source; `Rng(spec.seed)` by default.

    Returns:
        tuple[np.ndarray, DegradationLog]
    """
    rng = rng or Rng(spec.seed)
    if spec.kind in COMPLEX_KINDS:
        return apply_complex(x, spec, rng)
    x = _as_image(x)
    log = DegradationLog(spec.kind, rng.seed, x.shape)
    if spec.kind == GAUSSIAN:
        sigma = spec.sigma
    elif spec.kind == GAUSSIAN_BLIND:
        sigma = tuple(spec.sigma_range)
    else:
        sigma = float(rng.stream(_SIGMA).choice(np.asarray(spec.sigmas, dtype=np.float64)))
    return apply_gaussian(x, sigma, rng, log), log


def noise_level(log):
    """Mean Gaussian sigma (0-1 scale) recorded in a log, for noise-level maps."""
    sigmas = [entry['sigma'] for band in log.bands for entry in band if 'sigma' in entry]
    return float(np.mean(sigmas)) / 255.0 if sigmas else 0.0
