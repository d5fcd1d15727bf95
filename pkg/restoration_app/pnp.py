"""
Plug-and-play ADMM restoration with a denoiser as the prior.

Operators map a clean [H, W, D] image to an observation and back (exact
adjoints). The x-step solves (A^T A + rho I) x = A^T y + rho (z - u) by
conjugate gradients; the z-step calls the denoiser at the scheduled noise
level; the u-step accumulates the residual x - z.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from hsdt_app.conf import hsdt_settings
from hsdt_app.exceptions import DivergenceError, ShapeError
from hsdt_app.network import constant_noise_map, denoise

logger = logging.getLogger(__name__)

SR = 'sr'
CASSI = 'cassi'
IDENTITY = 'identity'

OPERATOR_CHOICES = [
    (SR, 'Gaussian blur then decimation'),
    (CASSI, 'coded aperture with band shifts'),
    (IDENTITY, 'identity (denoising)'),
]

BLUR_SIZE = 8
BLUR_SIGMA = 3.0
DIVERGENCE_STEPS = 3


def gaussian_kernel_1d(size=BLUR_SIZE, sigma=BLUR_SIGMA):
    """Normalized 1-D Gaussian centred between the two middle taps for even sizes."""
    coords = np.arange(size) - (size - 1) / 2
    kernel = np.exp(-coords ** 2 / (2 * sigma ** 2))
    return kernel / kernel.sum()


def gaussian_kernel(size=BLUR_SIZE, sigma=BLUR_SIGMA):
    """Normalized size x size Gaussian blur kernel."""
    k = gaussian_kernel_1d(size, sigma)
    return np.outer(k, k)


def blur_matrix(extent, kernel_1d):
    """
    Matrix of 1-D correlation with reflective boundaries: blur(v) == M @ v.
    """
    return ndimage.correlate1d(np.eye(extent), kernel_1d, axis=0, mode='reflect')


class DegradationOperator:
    """
    Linear observation model.

    Subclasses implement `forward` (clean -> observation) and `adjoint`.
    """
    kind = None

    def forward(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def normal(self, x):
        return self.adjoint(self.forward(x))

    def initial(self, y):
        """Starting estimate for ADMM."""
        return self.adjoint(y)


class IdentityOperator(DegradationOperator):
    kind = IDENTITY

    def forward(self, x):
        return np.asarray(x, dtype=np.float64)

    def adjoint(self, y):
        return np.asarray(y, dtype=np.float64)


class SuperResolution(DegradationOperator):
    """
    Per-band blur with the normalized 8x8 (sigma 3) Gaussian, reflective
    boundary, then keep every `scale`-th row and column.
    """
    kind = SR

    def __init__(self, scale, kernel_1d=None):
        if scale < 1:
            raise ValueError(f"Scale must be at least 1, got {scale}.")
        self.scale = int(scale)
        self.kernel_1d = gaussian_kernel_1d() if kernel_1d is None else np.asarray(kernel_1d, dtype=np.float64)
        self._matrices = {}

    def _blur(self, extent):
        if extent not in self._matrices:
            self._matrices[extent] = blur_matrix(extent, self.kernel_1d)
        return self._matrices[extent]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ShapeError(f"expected [H, W, D], got {x.shape}", axis='rank')
        height, width = x.shape[:2]
        for axis, extent in (('height', height), ('width', width)):
            if extent % self.scale:
                raise ShapeError(f"{extent} is not divisible by scale {self.scale}", axis=axis)
        blurred = np.einsum('ih,hwd,jw->ijd', self._blur(height), x, self._blur(width), optimize=True)
        return np.ascontiguousarray(blurred[::self.scale, ::self.scale])

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        height, width = y.shape[0] * self.scale, y.shape[1] * self.scale
        filled = np.zeros((height, width, y.shape[2]))
        filled[::self.scale, ::self.scale] = y
        return np.einsum('ih,ijd,jw->hwd', self._blur(height), filled, self._blur(width), optimize=True)

    def initial(self, y):
        return bicubic_upsample(y, self.scale)


def bicubic_upsample(y, scale):
    """Cubic-spline spatial upsampling of [h, w, D] by an integer factor."""
    return ndimage.zoom(np.asarray(y, dtype=np.float64), (scale, scale, 1), order=3, mode='reflect')


class Cassi(DegradationOperator):
    """
    Coded aperture snapshot: band d is masked, shifted right by d * step
    columns and summed into one [H, W + (D - 1) * step] measurement.
    """
    kind = CASSI

    def __init__(self, mask, bands, step=1):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim != 2:
            raise ShapeError(f"mask must be [H, W], got {mask.shape}", axis='rank')
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError('CASSI mask must be binary.')
        if step < 0:
            raise ValueError(f"Shift step must not be negative, got {step}.")
        if bands < 1:
            raise ValueError(f"Band count must be at least 1, got {bands}.")
        self.mask = mask
        self.bands = int(bands)
        self.step = int(step)

    @property
    def measurement_shape(self):
        height, width = self.mask.shape
        return height, width + (self.bands - 1) * self.step

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.mask.shape + (self.bands,):
            raise ShapeError(f"image {x.shape} does not match mask {self.mask.shape} with {self.bands} bands")
        width = self.mask.shape[1]
        out = np.zeros(self.measurement_shape)
        for band in range(self.bands):
            offset = band * self.step
            out[:, offset:offset + width] += self.mask * x[..., band]
        return out

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.measurement_shape:
            raise ShapeError(f"measurement {y.shape} does not match {self.measurement_shape}")
        width = self.mask.shape[1]
        x = np.empty(self.mask.shape + (self.bands,))
        for band in range(self.bands):
            offset = band * self.step
            x[..., band] = self.mask * y[:, offset:offset + width]
        return x

    def initial(self, y):
        """A^T (y / Phi), Phi being the measurement of an all-ones cube."""
        coverage = self.forward(np.ones(self.mask.shape + (self.bands,)))
        normalized = np.divide(y, coverage, out=np.zeros_like(coverage), where=coverage > 0)
        return self.adjoint(normalized)


def degrade_sr(x, scale):
    """Blur with the 8x8 sigma-3 Gaussian, then decimate by `scale`."""
    return SuperResolution(scale).forward(x)


def degrade_cassi(x, mask, step=1):
    x = np.asarray(x)
    return Cassi(mask, x.shape[-1], step).forward(x)


def random_mask(shape, seed, p=0.5):
    """Binary mask with P(1) = p."""
    rng = np.random.default_rng(seed)
    return (rng.random(shape) < p).astype(np.float64)


def identity_denoiser(x, sigma):
    return x


class ModelDenoiser:
    """
    Adapts an HSDT to the denoiser protocol: (image, sigma) -> image.

    Models with two input channels receive a constant noise-level map.
    """

    def __init__(self, model):
        self.model = model

    def __call__(self, x, sigma):
        return denoise(self.model, x, noise_map=constant_noise_map(self.model, x, sigma)).astype(np.float64)


def sigma_schedule(iterations, start=50 / 255, end=5 / 255):
    """Log-linear decay of the denoiser noise level."""
    return tuple(float(s) for s in np.geomspace(start, end, iterations))


@dataclass
class AdmmProblem:
    """
    Attributes:
        operator (DegradationOperator): Observation model.
        observation (np.ndarray): y.
        denoiser (callable): (image, sigma) -> image.
        iterations (int): ADMM iterations, at least 1.
        rhos (tuple[float]): Penalty per iteration.
        sigmas (tuple[float]): Denoiser noise level (0-1 scale) per iteration.
    """
    operator: DegradationOperator
    observation: np.ndarray
    denoiser: object
    iterations: int
    rhos: tuple
    sigmas: tuple

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError('ADMM needs at least one iteration.')
        if len(self.rhos) != self.iterations or len(self.sigmas) != self.iterations:
            raise ValueError(
                f"Schedules need {self.iterations} entries, got {len(self.rhos)} rhos and {len(self.sigmas)} sigmas.")
        if min(self.rhos) <= 0:
            raise ValueError('Penalties must be positive.')

    @classmethod
    def with_defaults(cls, operator, observation, denoiser, iterations, rho=1.0,
                      sigma_start=50 / 255, sigma_end=5 / 255):
        """Constant penalty and log-linear sigma decay."""
        return cls(operator, np.asarray(observation, dtype=np.float64), denoiser, iterations,
                   rhos=(float(rho),) * iterations, sigmas=sigma_schedule(iterations, sigma_start, sigma_end))


@dataclass
class AdmmResult:
    x: np.ndarray
    fidelity: list = field(default_factory=list)
    cg_residuals: list = field(default_factory=list)


def conjugate_gradient(apply, b, x0, iterations=None, tolerance=None):
    """
    Solve apply(x) = b for a symmetric positive-definite operator.

    Stops once the residual norm falls below `tolerance * |b|`.

    Returns:
        tuple[np.ndarray, list[float]]: Solution and residual-norm history.

    Raises:
        DivergenceError: Residual grew on DIVERGENCE_STEPS consecutive steps,
            or the operator is not positive definite along a search direction.
    """
    iterations = hsdt_settings.CG_ITERATIONS if iterations is None else iterations
    tolerance = hsdt_settings.CG_TOLERANCE if tolerance is None else tolerance
    x = np.array(x0, dtype=np.float64)
    r = b - apply(x)
    p = r.copy()
    rs = float(np.vdot(r, r))
    history = [np.sqrt(rs)]
    threshold = tolerance * max(float(np.linalg.norm(b)), np.finfo(np.float64).tiny)
    growth = 0
    for step in range(iterations):
        if history[-1] <= threshold:
            break
        ap = apply(p)
        curvature = float(np.vdot(p, ap))
        if curvature <= 0:
            raise DivergenceError('Conjugate gradient met a non-positive curvature.',
                                  {'residuals': history, 'step': step})
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * ap
        new_rs = float(np.vdot(r, r))
        history.append(np.sqrt(new_rs))
        growth = growth + 1 if new_rs > rs else 0
        if growth >= DIVERGENCE_STEPS:
            raise DivergenceError(f"Conjugate-gradient residual grew {growth} steps in a row.",
                                  {'residuals': history, 'step': step})
        p = r + (new_rs / rs) * p
        rs = new_rs
    return x, history


def admm_restore(problem, cg_iterations=None, cg_tolerance=None):
    """
    Run PnP-ADMM.

    Returns:
        AdmmResult: Final x, per-iteration data fidelity |A x - y| and the CG
        residual history of every x-step.
    """
    op, y = problem.operator, np.asarray(problem.observation, dtype=np.float64)
    x = op.initial(y)
    z = x.copy()
    u = np.zeros_like(x)
    adjoint_y = op.adjoint(y)
    result = AdmmResult(x=x)

    for k in range(problem.iterations):
        rho, sigma = problem.rhos[k], problem.sigmas[k]
        rhs = adjoint_y + rho * (z - u)
        x, history = conjugate_gradient(lambda v: op.normal(v) + rho * v, rhs, x, cg_iterations, cg_tolerance)
        z = np.asarray(problem.denoiser(x + u, sigma), dtype=np.float64)
        u = u + x - z
        fidelity = float(np.linalg.norm(op.forward(x) - y))
        result.fidelity.append(fidelity)
        result.cg_residuals.append([float(r) for r in history])
        logger.info("ADMM %d/%d: |Ax - y| = %.6e (rho %.3g, sigma %.4f).",
                    k + 1, problem.iterations, fidelity, rho, sigma)
    result.x = x
    return result
