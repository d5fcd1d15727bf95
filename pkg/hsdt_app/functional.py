"""
Differentiable tensor operations used by the HSDT layers.

Feature cubes are laid out [H, W, D, C] with an optional leading batch axis.
Every op records itself on the active tape (see `autograd`) and reports its
arithmetic-operation count to an active `count_flops()` block.
"""
import itertools
import string

import numpy as np
from scipy.special import erf, expit

from .autograd import Tensor, add_flops, record
from .conf import hsdt_settings
from .exceptions import ShapeError

SPATIAL_AXES = ('height', 'width', 'band')


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_cube(x, op):
    if x.ndim not in (4, 5):
        raise ShapeError(
            f"{op} expects [H, W, D, C] or [B, H, W, D, C], got shape {x.shape}", axis='rank')


def _triple(value, name):
    if isinstance(value, int):
        value = (value, value, value)
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise ShapeError(f"{name} needs three entries, got {value}", axis=name)
    return value


def conv3d(x, kernel, bias=None, stride=(1, 1, 1), padding=(0, 0, 0), groups=1):
    """
    Zero-padded 3-D convolution over the (H, W, D) axes of a feature cube.

    Computed as a sum over kernel taps, each tap a channel matmul of a strided
    window of the padded input.

    Args:
        x (Tensor): [..., H, W, D, Cin].
        kernel (Tensor): [kh, kw, kd, Cin // groups, Cout].
        bias (Tensor | None): [Cout].
        stride (tuple[int]): (sh, sw, sd).
        padding (tuple[int]): (ph, pw, pd).
        groups (int): Channel groups; Cout is split evenly across them.

    Returns:
        Tensor: [..., H', W', D', Cout] with H' = (H + 2ph - kh) // sh + 1 etc.

    Raises:
        ShapeError: On any mismatch, naming the offending axis.
    """
    _check_cube(x, 'conv3d')
    if kernel.ndim != 5:
        raise ShapeError(f"conv3d kernel must be rank 5, got {kernel.shape}", axis='kernel')
    stride = _triple(stride, 'stride')
    padding = _triple(padding, 'padding')
    kh, kw, kd, cin_group, cout = kernel.shape
    cin = x.shape[-1]
    if groups < 1 or cin != cin_group * groups:
        raise ShapeError(
            f"input has {cin} channels, kernel expects {cin_group} x {groups} groups", axis='channel')
    if cout % groups:
        raise ShapeError(f"{cout} output channels do not split into {groups} groups", axis='channel')
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} does not match {cout} output channels", axis='channel')

    out_extents = []
    for axis, extent, k, s, p in zip(SPATIAL_AXES, x.shape[-4:-1], (kh, kw, kd), stride, padding):
        if s < 1 or p < 0:
            raise ShapeError(f"invalid stride {s} / padding {p}", axis=axis)
        o = (extent + 2 * p - k) // s + 1
        if o < 1:
            raise ShapeError(f"kernel extent {k} exceeds padded extent {extent + 2 * p}", axis=axis)
        out_extents.append(o)
    oh, ow, od = out_extents
    sh, sw, sd = stride
    ph, pw, pd = padding

    lead = x.shape[:-4]
    pad_width = [(0, 0)] * len(lead) + [(ph, ph), (pw, pw), (pd, pd), (0, 0)]
    xp = np.pad(x.data, pad_width)
    out_group = cout // groups
    taps_kernel = kernel.data.reshape(kh, kw, kd, cin_group, groups, out_group)
    window_shape = lead + (oh, ow, od)
    positions = int(np.prod(window_shape))

    def window(arr, i, j, k):
        return arr[..., i:i + sh * (oh - 1) + 1:sh, j:j + sw * (ow - 1) + 1:sw,
                   k:k + sd * (od - 1) + 1:sd, :]

    taps = list(itertools.product(range(kh), range(kw), range(kd)))
    dtype = np.result_type(x.dtype, kernel.dtype)
    out = np.zeros((positions, groups, out_group), dtype=dtype)
    for i, j, k in taps:
        patch = window(xp, i, j, k).reshape(positions, groups, cin_group)
        if groups == 1:
            out[:, 0] += patch[:, 0] @ taps_kernel[i, j, k, :, 0]
        else:
            out += np.einsum('ngc,cgo->ngo', patch, taps_kernel[i, j, k])
    out = out.reshape(window_shape + (cout,))
    if bias is not None:
        out = out + bias.data
    add_flops('conv3d', 2 * positions * len(taps) * cin_group * cout)

    def backward_fn(g):
        g_groups = g.reshape(positions, groups, out_group)
        grad_xp = np.zeros_like(xp) if x.requires_grad else None
        grad_kernel = np.zeros_like(taps_kernel) if kernel.requires_grad else None
        for i, j, k in taps:
            if grad_xp is not None:
                contribution = np.einsum('ngo,cgo->ngc', g_groups, taps_kernel[i, j, k])
                window(grad_xp, i, j, k)[...] += contribution.reshape(window_shape + (cin,))
            if grad_kernel is not None:
                patch = window(xp, i, j, k).reshape(positions, groups, cin_group)
                grad_kernel[i, j, k] = np.einsum('ngc,ngo->cgo', patch, g_groups)
        grad_x = None
        if grad_xp is not None:
            grad_x = grad_xp[..., ph:ph + x.shape[-4], pw:pw + x.shape[-3], pd:pd + x.shape[-2], :]
        grad_k = None if grad_kernel is None else grad_kernel.reshape(kernel.shape)
        grads = (grad_x, grad_k)
        if bias is not None:
            grads += (g.reshape(-1, cout).sum(axis=0),)
        return grads

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record(out, inputs, backward_fn)


def matmul(a, b):
    """
    Matrix product of two rank-2 tensors.

    Raises:
        ShapeError: If either operand is not a matrix or the inner extents differ.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}", axis='rank')
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner extents differ: {a.shape} x {b.shape}", axis=1)
    add_flops('matmul', 2 * a.shape[0] * a.shape[1] * b.shape[1])
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g @ b_data.T, a_data.T @ g

    return record(a_data @ b_data, (a, b), backward_fn)


def linear(x, weight, bias=None):
    """
    Per-position channel map: out[..., o] = sum_c x[..., c] * weight[c, o] + bias[o].
    """
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"input has {x.shape[-1]} channels, weight expects {weight.shape[0]}", axis='channel')
    x_data, w_data = x.data, weight.data
    out = x_data @ w_data
    if bias is not None:
        out = out + bias.data
    add_flops('linear', 2 * (x.size // x.shape[-1]) * w_data.shape[0] * w_data.shape[1])

    def backward_fn(g):
        g_flat = g.reshape(-1, g.shape[-1])
        grads = (g @ w_data.T, x_data.reshape(-1, x_data.shape[-1]).T @ g_flat)
        if bias is not None:
            grads += (g_flat.sum(axis=0),)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record(out, inputs, backward_fn)


def _expand_ellipsis(subscripts, operands):
    inputs, output = subscripts.replace(' ', '').split('->')
    inputs = inputs.split(',')
    if len(inputs) != len(operands):
        raise ValueError(f"einsum '{subscripts}' needs {len(inputs)} operands")
    used = set(''.join(inputs) + output) - {'.'}
    spare = [c for c in string.ascii_letters if c not in used]
    widths = [op.ndim - (len(sub) - 3) for sub, op in zip(inputs, operands) if '...' in sub]
    width = max(widths, default=0)
    ellipsis = ''.join(spare[:width])
    expanded = []
    for sub, op in zip(inputs, operands):
        if '...' in sub:
            n = op.ndim - (len(sub) - 3)
            sub = sub.replace('...', ellipsis[width - n:])
        if len(sub) != op.ndim:
            raise ShapeError(f"einsum subscripts '{sub}' do not match shape {op.shape}", axis='rank')
        if len(set(sub)) != len(sub):
            raise ValueError(f"repeated subscript in '{sub}' is not supported")
        expanded.append(sub)
    return expanded, output.replace('...', ellipsis)


def einsum(subscripts, *operands):
    """
    Differentiable Einstein summation over one or two operands.

    Ellipses broadcast over equal leading extents only.
    """
    operands = tuple(_as_tensor(op) for op in operands)
    inputs, output = _expand_ellipsis(subscripts, operands)
    sizes = {}
    for sub, op in zip(inputs, operands):
        for letter, extent in zip(sub, op.shape):
            if sizes.setdefault(letter, extent) != extent:
                raise ShapeError(
                    f"subscript '{letter}' has extents {sizes[letter]} and {extent}", axis=letter)
    spec = ','.join(inputs) + '->' + output
    data = [op.data for op in operands]
    out = np.einsum(spec, *data, optimize=True)
    add_flops('einsum', 2 * int(np.prod(list(sizes.values()))))

    def backward_fn(g):
        grads = []
        for index, (sub, op) in enumerate(zip(inputs, operands)):
            if not op.requires_grad:
                grads.append(None)
                continue
            others = [(s, d) for n, (s, d) in enumerate(zip(inputs, data)) if n != index]
            present = set(output).union(*(set(s) for s, _ in others))
            kept = ''.join(c for c in sub if c in present)
            terms = [output] + [s for s, _ in others]
            grad = np.einsum(','.join(terms) + '->' + kept, g, *[d for _, d in others], optimize=True)
            if kept != sub:
                shape = [sizes[c] if c in kept else 1 for c in sub]
                grad = np.broadcast_to(grad.reshape(shape), op.shape).copy()
            grads.append(grad)
        return tuple(grads)

    return record(np.asarray(out), operands, backward_fn)


def softmax(x, axis=-1):
    """
    Numerically stable softmax along `axis`; slices along it sum to 1.
    """
    x = _as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}", axis=axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=axis, keepdims=True)
    add_flops('softmax', 4 * x.size)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (x,), backward_fn)


def activation(x, kind):
    """
    Element-wise non-linearity.

    Args:
        x (Tensor): Any shape.
        kind (str): 'sigmoid' or 'gelu'. GELU is the exact x * Phi(x) form.
    """
    x = _as_tensor(x)
    data = x.data
    if kind == 'sigmoid':
        out = expit(data)
        derivative = out * (1.0 - out)
    elif kind == 'gelu':
        cdf = 0.5 * (1.0 + erf(data / np.sqrt(2.0)))
        pdf = np.exp(-0.5 * data * data) / np.sqrt(2.0 * np.pi)
        out = data * cdf
        derivative = cdf + data * pdf
    else:
        raise ValueError(f"Unknown activation '{kind}'.")
    add_flops(kind, 4 * x.size)
    return record(out.astype(x.dtype, copy=False), (x,), lambda g: (g * derivative,))


def sigmoid(x):
    return activation(x, 'sigmoid')


def gelu(x):
    return activation(x, 'gelu')


def global_avg_pool(x):
    """
    Mean over the spatial axes: [..., H, W, D, C] -> [..., D, C].
    """
    _check_cube(x, 'global_avg_pool')
    height, width = x.shape[-4], x.shape[-3]
    shape = x.shape
    add_flops('global_avg_pool', x.size)

    def backward_fn(g):
        g = np.expand_dims(g, (-4, -3)) / (height * width)
        return (np.broadcast_to(g, shape).astype(x.dtype),)

    return record(x.data.mean(axis=(-4, -3)), (x,), backward_fn)


def interpolation_matrix(extent, factor, dtype=np.float64):
    """
    Linear-interpolation matrix for upsampling one axis by an integer factor.

    Uses the align-corners=false convention: output sample i reads source
    position (i + 0.5) / factor - 0.5, clamped to the valid range.
    """
    out_extent = extent * factor
    matrix = np.zeros((out_extent, extent), dtype=dtype)
    source = (np.arange(out_extent) + 0.5) / factor - 0.5
    source = np.clip(source, 0, extent - 1)
    lower = np.floor(source).astype(int)
    upper = np.minimum(lower + 1, extent - 1)
    weight = source - lower
    rows = np.arange(out_extent)
    np.add.at(matrix, (rows, lower), 1.0 - weight)
    np.add.at(matrix, (rows, upper), weight)
    return matrix


def _apply_along(arr, matrix, axis):
    return np.moveaxis(np.tensordot(matrix, arr, axes=(1, axis)), 0, axis)


def trilinear_upsample(x, factors):
    """
    Separable trilinear upsampling of [..., H, W, D, C] by integer factors.

    Factor 1 leaves an axis untouched; constants stay constant.
    """
    _check_cube(x, 'trilinear_upsample')
    factors = _triple(factors, 'factors')
    if any(f < 1 for f in factors):
        raise ShapeError(f"upsampling factors must be >= 1, got {factors}", axis='factors')
    axes = (x.ndim - 4, x.ndim - 3, x.ndim - 2)
    matrices = [
        None if f == 1 else interpolation_matrix(x.shape[axis], f, x.dtype)
        for axis, f in zip(axes, factors)
    ]
    out = x.data
    for axis, matrix in zip(axes, matrices):
        if matrix is not None:
            out = _apply_along(out, matrix, axis)
    add_flops('trilinear_upsample', 2 * out.size * sum(m is not None for m in matrices))

    def backward_fn(g):
        for axis, matrix in zip(axes, matrices):
            if matrix is not None:
                g = _apply_along(g, matrix.T, axis)
        return (g,)

    return record(np.ascontiguousarray(out), (x,), backward_fn)


def batch_norm(x, state, mode='train', momentum=None, epsilon=None):
    """
    Per-channel batch normalization of a feature cube.

    Args:
        x (Tensor): [..., C]; statistics run over every axis but the last.
        state: Object with `gamma`, `beta` (Tensors [C]) and `running_mean`,
            `running_var` (arrays [C]), e.g. a `BatchNorm` module.
        mode (str): 'train' normalizes with batch statistics and updates the
            running ones; 'eval' uses the running statistics.
        momentum (float | None): Running-statistics momentum, BN_MOMENTUM by default.
        epsilon (float | None): Variance floor, BN_EPSILON by default.
    """
    momentum = hsdt_settings.BN_MOMENTUM if momentum is None else momentum
    epsilon = hsdt_settings.BN_EPSILON if epsilon is None else epsilon
    channels = x.shape[-1]
    if state.gamma.shape != (channels,):
        raise ShapeError(
            f"batch norm state has {state.gamma.shape[0]} channels, input has {channels}", axis='channel')

    if mode == 'eval':
        inv_std = (1.0 / np.sqrt(state.running_var + epsilon)).astype(x.dtype)
        scale = state.gamma * inv_std
        shift = state.beta - state.gamma * (state.running_mean * inv_std).astype(x.dtype)
        return x * scale + shift
    if mode != 'train':
        raise ValueError(f"Unknown batch norm mode '{mode}'.")

    axes = tuple(range(x.ndim - 1))
    count = x.size // channels
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    x_hat = (x.data - mean) * inv_std
    gamma, beta = state.gamma.data, state.beta.data
    out = x_hat * gamma + beta

    unbiased = var * count / (count - 1) if count > 1 else var
    state.running_mean[...] = (1 - momentum) * state.running_mean + momentum * mean
    state.running_var[...] = (1 - momentum) * state.running_var + momentum * unbiased
    add_flops('batch_norm', 8 * x.size)

    def backward_fn(g):
        g_hat = g * gamma
        grad_x = inv_std / count * (
            count * g_hat - g_hat.sum(axis=axes) - x_hat * (g_hat * x_hat).sum(axis=axes))
        return grad_x, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    return record(out.astype(x.dtype, copy=False), (x, state.gamma, state.beta), backward_fn)


def concat(tensors, axis=-1):
    """Concatenate tensors along `axis`; gradients are split back."""
    tensors = [_as_tensor(t) for t in tensors]
    extents = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(extents)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn)
