"""
Losses, the Adam optimizer, the multi-stage learning-rate schedule and the
patch-sampling training loop.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from tqdm import tqdm

from restoration_app.noise import GAUSSIAN, GAUSSIAN_CHOICE, MIXTURE, NoiseSpec, Rng, degrade, noise_level

from .autograd import Tape, Tensor, backward, record
from .conf import hsdt_settings
from .exceptions import NumericalError, ScheduleError, ShapeError
from .network import ALTERNATE, DEFAULT_CA_PROBABILITY

logger = logging.getLogger(__name__)

MSE = 'mse'
SQRT_MSE = 'sqrt_mse'

LOSS_CHOICES = [
    (MSE, 'mean squared error'),
    (SQRT_MSE, 'square root of the mean squared error'),
]

SQRT_EPSILON = 1e-12
DEFAULT_CLIP_NORM = 1.0


def _guarded_sqrt(x):
    out = np.sqrt(x.data)

    def backward_fn(g):
        return (g * 0.5 / np.maximum(out, SQRT_EPSILON),)

    return record(out, (x,), backward_fn)


def loss(pred, target, kind=MSE):
    """
    Scalar training loss.

    Args:
        pred (Tensor): Network output.
        target (Tensor | np.ndarray): Clean reference of the same shape.
        kind (str): 'mse', or 'sqrt_mse' whose derivative is floored at zero.
    """
    target = target if isinstance(target, Tensor) else Tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    mse = (diff * diff).mean()
    if kind == MSE:
        return mse
    if kind == SQRT_MSE:
        return _guarded_sqrt(mse)
    raise ValueError(f"Unknown loss '{kind}'.")


@dataclass
class OptimState:
    """
    Adam state, keyed by dotted parameter name.

    Attributes:
        step (int): Number of updates applied so far.
        first_moment (dict[str, np.ndarray]): Running mean of gradients.
        second_moment (dict[str, np.ndarray]): Running mean of squared gradients.
    """
    step: int = 0
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """
    One bias-corrected Adam update, in place.

    Args:
        params (dict[str, Tensor]): Parameters by name.
        grads (dict[str, np.ndarray]): Gradients by name, same shapes.
        state (OptimState): Updated in place.
        lr (float): Step size.

    Raises:
        NumericalError: If any gradient is non-finite; nothing is updated then.
    """
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(f"gradient of '{name}' has shape {grad.shape}, parameter {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"Non-finite gradient for '{name}'.")

    state.step += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.first_moment[name] = m.astype(param.dtype, copy=False)
        state.second_moment[name] = v.astype(param.dtype, copy=False)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        param.data -= update.astype(param.dtype, copy=False)
    return state


def clip_grad_norm(grads, max_norm):
    """
    Scale gradients in place so their global L2 norm is at most `max_norm`.

    Returns:
        float: The norm before clipping.
    """
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for name in grads:
            grads[name] = grads[name] * scale
    return total


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    lr: float


@dataclass(frozen=True)
class Stage:
    """
    A run of constant-lr segments sharing one training noise.

    Attributes:
        segments (tuple[Segment]): Contiguous epoch ranges.
        noise (NoiseSpec | None): Degradation used while the stage runs.
        warmup (bool): Ramp the lr linearly from 0 during the stage's first epoch.
    """
    segments: tuple
    noise: NoiseSpec = None
    warmup: bool = False

    @property
    def start(self):
        return self.segments[0].start

    @property
    def end(self):
        return self.segments[-1].end


@dataclass(frozen=True)
class Schedule:
    """
    Piecewise-constant multi-stage learning-rate schedule.

    Epoch ranges are half-open [start, end), start at 0 and are contiguous.
    """
    stages: tuple

    def __post_init__(self):
        if not self.stages:
            raise ScheduleError('A schedule needs at least one stage.')
        expected = 0
        for stage in self.stages:
            if not stage.segments:
                raise ScheduleError('Every stage needs at least one segment.')
            for segment in stage.segments:
                if segment.start != expected:
                    raise ScheduleError(
                        f"Segment {segment.start}-{segment.end} does not start at epoch {expected}.")
                if segment.end <= segment.start:
                    raise ScheduleError(f"Segment {segment.start}-{segment.end} is empty.")
                if segment.lr < 0:
                    raise ScheduleError(f"Negative learning rate {segment.lr}.")
                expected = segment.end

    @property
    def total_epochs(self):
        return self.stages[-1].end

    def segments(self):
        return [segment for stage in self.stages for segment in stage.segments]

    def stage_at(self, epoch):
        for stage in self.stages:
            if stage.start <= epoch < stage.end:
                return stage
        raise ScheduleError(f"Epoch {epoch} lies outside the schedule [0, {self.total_epochs}).")

    def noise_at(self, epoch):
        return self.stage_at(epoch).noise

    def lr_at(self, epoch, step_in_epoch=0, steps_per_epoch=1):
        return lr_at(self, epoch, step_in_epoch, steps_per_epoch)

    def scaled(self, divisor):
        """
        Shrink every epoch boundary by `divisor`, keeping each segment at least
        one epoch long so every lr value survives.
        """
        if divisor < 1:
            raise ScheduleError(f"Schedule divisor must be >= 1, got {divisor}.")
        end = 0
        stages = []
        for stage in self.stages:
            segments = []
            for segment in stage.segments:
                start = end
                end = max(start + 1, int(round(segment.end / divisor)))
                segments.append(Segment(start, end, segment.lr))
            stages.append(replace(stage, segments=tuple(segments)))
        return Schedule(tuple(stages))

    def with_noise(self, noise):
        """Same lr table with one noise for every stage."""
        return Schedule(tuple(replace(stage, noise=noise) for stage in self.stages))


def lr_at(schedule, epoch, step_in_epoch=0, steps_per_epoch=1):
    """
    Learning rate for a step.

    Piecewise constant per segment; inside the first epoch of a warmup stage
    the rate ramps linearly, lr * step_in_epoch / steps_per_epoch.

    Raises:
        ScheduleError: Epoch outside the schedule.
    """
    stage = schedule.stage_at(epoch)
    for segment in stage.segments:
        if segment.start <= epoch < segment.end:
            break
    if stage.warmup and epoch == stage.start:
        return segment.lr * step_in_epoch / max(steps_per_epoch, 1)
    return segment.lr


def _stage(noise, warmup, *table):
    return Stage(tuple(Segment(start, end, lr) for start, end, lr in table), noise=noise, warmup=warmup)


STAGED_SCHEDULE = Schedule((
    _stage(NoiseSpec(GAUSSIAN, sigma=50.0), False,
           (0, 20, 1e-3), (20, 30, 1e-4)),
    _stage(NoiseSpec(GAUSSIAN_CHOICE, sigmas=(10.0, 30.0, 50.0, 70.0)), True,
           (30, 45, 1e-3), (45, 55, 1e-4), (55, 60, 5e-5), (60, 65, 1e-5), (65, 75, 5e-6), (75, 80, 1e-6)),
    _stage(NoiseSpec(MIXTURE), False,
           (80, 90, 1e-3), (90, 95, 5e-4), (95, 100, 1e-4), (100, 105, 5e-5), (105, 110, 1e-5)),
))


def constant_schedule(lr, epochs, noise=None):
    return Schedule((_stage(noise, False, (0, epochs, lr)),))


@dataclass
class TrainingResult:
    model: object
    state: OptimState
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)


class PatchSampler:
    """
    Deterministic batch producer: random crops of the dataset, degraded on the fly.

    Each batch depends only on (seed, epoch, step), so batches can be prepared
    ahead of the optimizer.
    """

    def __init__(self, dataset, batch, patch, seed):
        self.images = [np.asarray(image, dtype=np.float64) for image in dataset]
        if not self.images:
            raise ValueError('Training needs at least one image.')
        bands = {image.shape[-1] for image in self.images}
        if len(bands) != 1:
            raise ShapeError(f"all training images need the same band count, got {sorted(bands)}", axis='band')
        self.patch = tuple(patch)
        for image in self.images:
            if image.ndim != 3 or image.shape[0] < self.patch[0] or image.shape[1] < self.patch[1]:
                raise ShapeError(f"image {image.shape} is smaller than patch {self.patch}")
        self.batch = batch
        self.seed = seed

    def patches_per_epoch(self):
        ph, pw = self.patch
        return sum((image.shape[0] // ph) * (image.shape[1] // pw) for image in self.images)

    def sample(self, noise, epoch, step):
        rng = Rng(self.seed).child(epoch, step)
        picker = rng.stream(0)
        ph, pw = self.patch
        clean, noisy, levels = [], [], []
        for index in range(self.batch):
            image = self.images[int(picker.integers(len(self.images)))]
            top = int(picker.integers(image.shape[0] - ph + 1))
            left = int(picker.integers(image.shape[1] - pw + 1))
            crop = image[top:top + ph, left:left + pw]
            degraded, log = degrade(crop, noise, rng.child(index + 1))
            clean.append(crop)
            noisy.append(degraded)
            levels.append(noise_level(log))
        return np.stack(noisy), np.stack(clean), np.asarray(levels)


def train_loop(model, dataset, noise, schedule, epochs=None, batch=16, patch=(64, 64), seed=0,
               steps_per_epoch=None, loss_kind=MSE, clip_norm=None, ca_probability=DEFAULT_CA_PROBABILITY,
               state=None, progress=None, start_epoch=0):
    """
    Train `model` in place.

    Args:
        model (HsdtModel): Network to optimize.
        dataset (list[np.ndarray]): Clean HSIs [H, W, D] in [0, 1].
        noise (NoiseSpec | None): Degradation for every epoch; when None the
            schedule's per-stage noise is used.
        schedule (Schedule): Learning-rate table.
        epochs (int | None): Epoch to stop before; all of the schedule by default.
        batch (int): Patches per step.
        patch (tuple): Patch height and width.
        seed (int): Drives sampling, degradation and the attention policy.
        steps_per_epoch (int | None): Defaults to one pass over the
            non-overlapping patches of the dataset.
        loss_kind (str): 'mse' or 'sqrt_mse'.
        clip_norm (float | None): Global gradient-norm bound; 1.0 for sqrt_mse
            and off for mse unless given. 0 disables clipping.
        state (OptimState | None): Resume from an optimizer state.
        progress (bool | None): tqdm bars; the PROGRESS setting by default.
        start_epoch (int | None): First epoch to run; `epochs` stays the end
            (exclusive). None continues after the last whole epoch in `state`.

    Returns:
        TrainingResult
    """
    sampler = PatchSampler(dataset, batch, patch, seed)
    epochs = schedule.total_epochs if epochs is None else epochs
    if steps_per_epoch is None:
        steps_per_epoch = max(1, sampler.patches_per_epoch() // batch)
    if steps_per_epoch < 1 or batch < 1:
        raise ValueError('batch and steps_per_epoch must be at least 1.')
    if clip_norm is None:
        clip_norm = DEFAULT_CLIP_NORM if loss_kind == SQRT_MSE else 0.0
    progress = hsdt_settings.PROGRESS if progress is None else progress
    state = state or OptimState()
    if start_epoch is None:
        start_epoch = state.step // steps_per_epoch
    if start_epoch < 0:
        raise ValueError("start_epoch must be non-negative.")
    policy = np.random.default_rng([seed, 1])
    params = dict(model.named_parameters())
    result = TrainingResult(model=model, state=state)

    model.train()

    def batch_for(epoch, step):
        spec = noise or schedule.noise_at(epoch)
        if spec is None:
            raise ScheduleError(f"No training noise for epoch {epoch}.")
        return sampler.sample(spec, epoch, step)

    with ThreadPoolExecutor(max_workers=1) as executor:
        pending = executor.submit(batch_for, start_epoch, 0) if epochs > start_epoch else None
        if start_epoch:
            logger.info("Resuming at epoch %d (optimizer step %d).", start_epoch, state.step)
        for epoch in range(start_epoch, epochs):
            losses = []
            steps = tqdm(range(steps_per_epoch), desc=f"epoch {epoch}", disable=not progress, leave=False)
            for step in steps:
                noisy, clean, levels = pending.result()
                if step + 1 < steps_per_epoch:
                    pending = executor.submit(batch_for, epoch, step + 1)
                elif epoch + 1 < epochs:
                    pending = executor.submit(batch_for, epoch + 1, 0)
                lr = lr_at(schedule, epoch, step, steps_per_epoch)

                with Tape() as tape:
                    noise_map = None
                    if model.config.input_channels == 2:
                        noise_map = np.broadcast_to(levels[:, None, None, None], noisy.shape).astype(model.dtype)
                    pred = model(Tensor(noisy, dtype=model.dtype), noise_map=noise_map, attn_mode=ALTERNATE,
                                 rng=policy, ca_probability=ca_probability)
                    value = loss(pred, Tensor(clean, dtype=model.dtype), loss_kind)
                grads = backward(value, tape, params.values())
                named = {name: grads[param] for name, param in params.items()}
                if clip_norm:
                    clip_grad_norm(named, clip_norm)
                adam_step(params, named, state, lr)

                losses.append(value.item())
                result.step_losses.append(value.item())
                result.learning_rates.append(lr)
                steps.set_postfix(loss=f"{value.item():.5f}")

            mean = float(np.mean(losses))
            result.epoch_losses.append(mean)
            logger.info("Epoch %d: mean loss %.6f, lr %.2e.", epoch, mean, result.learning_rates[-1])
    return result
