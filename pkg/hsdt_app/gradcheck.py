"""
Finite-difference verification of every differentiable operation.
"""
import logging
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from . import functional as F
from .autograd import Tape, Tensor, backward
from .blocks import (CONV3D, CROSS_ATTENTION, PARALLEL2, SELF_ATTENTION, SEQUENTIAL, SINGLE_SPATIAL, GSSA, SMFFN,
                     S3Conv, TransformerBlock, band_mixing)
from .conf import hsdt_settings
from .modules import BatchNorm
from .network import HsdtConfig, build_model

logger = logging.getLogger(__name__)

TINY = np.finfo(np.float64).tiny


def _value(out):
    return float(out.data) if isinstance(out, Tensor) else float(out)


def finite_diff_grad(f, x, h=None):
    """
    Central-difference gradient of a scalar function.

    Args:
        f (callable): Tensor -> scalar (Tensor or float); must be deterministic.
        x (Tensor): Point of evaluation; perturbed in place and restored.
        h (float | None): Step, GRADCHECK_STEP by default.

    Returns:
        np.ndarray: Same shape as x.
    """
    h = hsdt_settings.GRADCHECK_STEP if h is None else h
    return _numeric(lambda: f(x), x, range(x.size), h).reshape(x.shape)


def _numeric(f, x, indices, h):
    flat = x.data.reshape(-1)
    out = np.zeros(x.size, dtype=np.float64)
    for index in indices:
        original = flat[index]
        flat[index] = original + h
        plus = _value(f())
        flat[index] = original - h
        minus = _value(f())
        flat[index] = original
        out[index] = (plus - minus) / (2 * h)
    return out


def relative_error(analytic, numeric, floor=None):
    """
    max |a - n| / max(max |a|, max |n|, floor).

    Scales below `floor` (GRADCHECK_FLOOR by default) are raised to it, so a
    gradient that vanishes up to rounding, like a conv bias feeding train-mode
    batch norm, is compared in absolute terms.
    """
    floor = hsdt_settings.GRADCHECK_FLOOR if floor is None else floor
    analytic, numeric = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor, TINY)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


@dataclass
class GradcheckResult:
    name: str
    max_relative_error: float
    tolerance: float
    checked: int

    @property
    def passed(self):
        return self.max_relative_error < self.tolerance


def check_gradients(name, f, inputs, h=None, tolerance=None, max_entries=None, rng=None):
    """
    Compare tape gradients of a scalar closure with central differences.

    Args:
        name (str): Label for the report.
        f (callable): () -> scalar Tensor, reading `inputs`.
        inputs (list[Tensor]): float64 tensors with requires_grad.
        max_entries (int | None): Check at most this many random entries per input.
    """
    h = hsdt_settings.GRADCHECK_STEP if h is None else h
    tolerance = hsdt_settings.GRADCHECK_TOLERANCE if tolerance is None else tolerance
    rng = rng or np.random.default_rng(0)

    with Tape() as tape:
        out = f()
    grads = backward(out, tape, inputs)

    worst, checked = 0.0, 0
    for tensor in inputs:
        if max_entries is None or tensor.size <= max_entries:
            indices = np.arange(tensor.size)
        else:
            indices = np.sort(rng.choice(tensor.size, size=max_entries, replace=False))
        numeric = _numeric(f, tensor, indices, h)[indices]
        analytic = grads[tensor].reshape(-1)[indices]
        worst = max(worst, relative_error(analytic, numeric))
        checked += len(indices)
    return GradcheckResult(name, worst, tolerance, checked)


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True, dtype='float64')


def _projector(rng, shape):
    weights = rng.normal(size=shape)
    return lambda out: (out * weights).sum()


def _module_case(module, x, rng, call):
    inputs = [x] + module.parameters()
    project = None

    def f():
        nonlocal project
        out = call(module, x)
        if project is None:
            project = _projector(rng, out.shape)
        return project(out)

    f()
    return f, inputs


def _conv3d(rng):
    x, kernel, bias = _param(rng, 4, 3, 3, 2), _param(rng, 3, 3, 3, 2, 3), _param(rng, 3)
    project = _projector(rng, (2, 3, 3, 3))
    return lambda: project(F.conv3d(x, kernel, bias, stride=(2, 1, 1), padding=(1, 1, 1))), [x, kernel, bias]


def _grouped_conv3d(rng):
    x, kernel = _param(rng, 2, 2, 3, 4), _param(rng, 1, 1, 1, 2, 4)
    project = _projector(rng, (2, 2, 3, 4))
    return lambda: project(F.conv3d(x, kernel, groups=2)), [x, kernel]


def _matmul(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    project = _projector(rng, (3, 2))
    return lambda: project(F.matmul(a, b)), [a, b]


def _einsum(rng):
    a, b = _param(rng, 2, 3, 4), _param(rng, 4, 5)
    project = _projector(rng, (2, 3, 5))
    return lambda: project(F.einsum('...ic,cj->...ij', a, b)), [a, b]


def _softmax(rng):
    x = _param(rng, 3, 4)
    first, last = _projector(rng, (3, 4)), _projector(rng, (3, 4))
    return lambda: first(F.softmax(x, axis=0)) + last(F.softmax(x, axis=-1)), [x]


def _activation(kind):
    def build(rng):
        x = _param(rng, 2, 3, 4)
        project = _projector(rng, x.shape)
        return lambda: project(F.activation(x, kind)), [x]
    return build


def _pool(rng):
    x = _param(rng, 3, 2, 4, 2)
    project = _projector(rng, (4, 2))
    return lambda: project(F.global_avg_pool(x)), [x]


def _upsample(rng):
    x = _param(rng, 2, 3, 2, 2)
    spatial, spectral = _projector(rng, (4, 6, 2, 2)), _projector(rng, (2, 3, 4, 2))
    return (lambda: spatial(F.trilinear_upsample(x, (2, 2, 1))) + spectral(F.trilinear_upsample(x, (1, 1, 2))),
            [x])


def _batch_norm(mode):
    def build(rng):
        x = _param(rng, 3, 2, 2, 3)
        state = BatchNorm(3, dtype='float64')
        state.gamma.data[...] = rng.normal(1.0, 0.2, 3)
        state.beta.data[...] = rng.normal(0.0, 0.2, 3)
        state.running_var[...] = rng.uniform(0.5, 2.0, 3)
        project = _projector(rng, x.shape)
        return lambda: project(F.batch_norm(x, state, mode=mode)), [x, state.gamma, state.beta]
    return build


def _tensor_ops(rng):
    a, b = _param(rng, 3, 4), Tensor(rng.uniform(1.0, 2.0, (3, 4)), requires_grad=True, dtype='float64')
    project = _projector(rng, (4, 3))

    def f():
        mixed = (a * b - a / b + a ** 3).transpose(1, 0) + b.sqrt().transpose(1, 0)
        return project(mixed) + F.concat([a, b], axis=-1)[:, 2:6].mean()
    return f, [a, b]


def _s3conv(variant, stride):
    def build(rng):
        module = S3Conv(2, 3, rng, stride=stride, variant=variant, dtype='float64')
        return _module_case(module, _param(rng, 4, 4, 3, 2), rng, lambda m, x: m(x))
    return build


def _gssa(mode, fast=False):
    def build(rng):
        module = GSSA(3, rng, d_train=4, dtype='float64')
        call = (lambda m, x: m.fast_forward(x, mode)) if fast else (lambda m, x: m(x, mode))
        return _module_case(module, _param(rng, 2, 3, 4, 3), rng, call)
    return build


def _band_mixing(rng):
    value, attention = _param(rng, 2, 2, 2, 3, 2), _param(rng, 2, 3, 3)
    project = _projector(rng, value.shape)
    return lambda: project(band_mixing(value, attention)), [value, attention]


def _smffn(rng):
    return _module_case(SMFFN(3, rng, dtype='float64'), _param(rng, 2, 2, 2, 3), rng, lambda m, x: m(x))


def _block(rng):
    module = TransformerBlock(2, 3, rng, stride=2, d_train=3, dtype='float64')
    return _module_case(module, _param(rng, 4, 4, 3, 2), rng, lambda m, x: m(x, SELF_ATTENTION))


def _model(rng):
    config = HsdtConfig(base_channels=2, d_train=4)
    model = build_model(config, seed=int(rng.integers(2 ** 31)), dtype='float64')
    model.tail.weight.data[...] = rng.normal(0.0, 0.5, model.tail.weight.shape)
    model.tail.bias.data[...] = rng.normal(0.0, 0.5, model.tail.bias.shape)
    x = _param(rng, 8, 8, 4, scale=0.5)
    return _module_case(model, x, rng, lambda m, hsi: m(hsi, attn_mode=SELF_ATTENTION))


SUITE = [
    ('conv3d', _conv3d),
    ('conv3d_grouped', _grouped_conv3d),
    ('matmul', _matmul),
    ('einsum', _einsum),
    ('softmax', _softmax),
    ('sigmoid', _activation('sigmoid')),
    ('gelu', _activation('gelu')),
    ('global_avg_pool', _pool),
    ('trilinear_upsample', _upsample),
    ('batch_norm_train', _batch_norm('train')),
    ('batch_norm_eval', _batch_norm('eval')),
    ('tensor_ops', _tensor_ops),
    ('s3conv_parallel2', _s3conv(PARALLEL2, 1)),
    ('s3conv_parallel2_stride2', _s3conv(PARALLEL2, 2)),
    ('s3conv_single_spatial', _s3conv(SINGLE_SPATIAL, 1)),
    ('s3conv_sequential', _s3conv(SEQUENTIAL, 2)),
    ('s3conv_conv3d', _s3conv(CONV3D, 1)),
    ('gssa_sa', _gssa(SELF_ATTENTION)),
    ('gssa_ca', _gssa(CROSS_ATTENTION)),
    ('gssa_fast_sa', _gssa(SELF_ATTENTION, fast=True)),
    ('gssa_fast_ca', _gssa(CROSS_ATTENTION, fast=True)),
    ('band_mixing', _band_mixing),
    ('smffn', _smffn),
    ('transformer_block', _block),
    ('model', _model),
]

MODEL_MAX_ENTRIES = 4


def run_suite(names=None, seed=0, progress=None):
    """
    Run the gradient checks.

    Args:
        names (list[str] | None): Subset of SUITE names; all by default.
        seed (int): Seeds inputs, parameters and entry subsampling.
        progress (bool | None): tqdm bar; the PROGRESS setting by default.

    Returns:
        list[GradcheckResult]
    """
    progress = hsdt_settings.PROGRESS if progress is None else progress
    cases = [(index, name, build) for index, (name, build) in enumerate(SUITE) if names is None or name in names]
    unknown = set(names or ()) - {name for name, _ in SUITE}
    if unknown:
        raise ValueError(f"Unknown gradient checks: {sorted(unknown)}.")

    results = []
    for index, name, build in tqdm(cases, desc='gradcheck', disable=not progress):
        rng = np.random.default_rng([seed, index])
        f, inputs = build(rng)
        max_entries = MODEL_MAX_ENTRIES if name == 'model' else None
        result = check_gradients(name, f, inputs, max_entries=max_entries, rng=rng)
        log = logger.info if result.passed else logger.error
        log("%s: max relative error %.2e over %d entries.", name, result.max_relative_error, result.checked)
        results.append(result)
    return results
