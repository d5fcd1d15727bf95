"""
Parameter containers: a small module tree with dotted parameter names.

Names follow "stage.index.layer.tensor" paths, e.g. `encoder.0.gssa.queries`.
"""
from collections import OrderedDict

import numpy as np

from . import functional as F
from .autograd import Tensor, resolve_dtype


class Module:
    """
    Base class for every layer.

    Attributes assigned as Modules become children, Tensors with
    `requires_grad` become parameters, and `register_buffer` adds
    non-trainable arrays (batch-norm running statistics).
    """

    def __init__(self):
        object.__setattr__(self, '_modules', OrderedDict())
        object.__setattr__(self, '_parameters', OrderedDict())
        object.__setattr__(self, '_buffers', OrderedDict())
        object.__setattr__(self, 'training', True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._parameters[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self):
        return self._modules.items()

    def named_parameters(self, prefix=''):
        """
        Yield (dotted name, Tensor) for every parameter in definition order.
        """
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [param for _, param in self.named_parameters()]

    def named_buffers(self, prefix=''):
        for name, buf in self._buffers.items():
            yield prefix + name, buf
        for name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state_entries(self):
        """
        Every persisted array by dotted name: parameters first, then buffers.

        Returns:
            OrderedDict[str, np.ndarray]: Views onto the live arrays.
        """
        entries = OrderedDict((name, param.data) for name, param in self.named_parameters())
        entries.update(self.named_buffers())
        return entries

    def train(self, mode=True):
        object.__setattr__(self, 'training', mode)
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    @property
    def mode(self):
        return 'train' if self.training else 'eval'


class ModuleList(Module):
    """Ordered children named '0', '1', ..."""

    def __init__(self, modules=()):
        super().__init__()
        for module in modules:
            self.append(module)

    def append(self, module):
        setattr(self, str(len(self._modules)), module)

    def __iter__(self):
        return iter(self._modules.values())

    def __len__(self):
        return len(self._modules)

    def __getitem__(self, index):
        return list(self._modules.values())[index]


def uniform(rng, bound, shape, dtype):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, dtype=dtype)


class Linear(Module):
    """
    Channel-wise linear map applied at every spatial-spectral position.

    Weight [Cin, Cout] and bias [Cout] are drawn from U(-1/sqrt(Cin), 1/sqrt(Cin)).
    """

    def __init__(self, in_channels, out_channels, rng, dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        bound = 1.0 / np.sqrt(in_channels)
        self.weight = uniform(rng, bound, (in_channels, out_channels), dtype)
        self.bias = uniform(rng, bound, (out_channels,), dtype)

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv3d(Module):
    """
    3-D convolution over (H, W, D) with per-axis kernel, stride and zero padding.

    Kernel layout is [kh, kw, kd, Cin, Cout]; initialization bounds use the
    fan-in Cin * kh * kw * kd.
    """

    def __init__(self, in_channels, out_channels, kernel_size, rng, stride=(1, 1, 1),
                 padding=(0, 0, 0), dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        kernel_size = tuple(kernel_size)
        self.stride = tuple(stride)
        self.padding = tuple(padding)
        fan_in = in_channels * int(np.prod(kernel_size))
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = uniform(rng, bound, kernel_size + (in_channels, out_channels), dtype)
        self.bias = uniform(rng, bound, (out_channels,), dtype)

    def forward(self, x):
        return F.conv3d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm(Module):
    """
    Per-channel batch normalization state: affine gamma/beta plus running stats.

    Running statistics start at mean 0 and variance 1, so evaluating before any
    training step is well defined.
    """

    def __init__(self, channels, dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.gamma = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.register_buffer('running_mean', np.zeros(channels, dtype=dtype))
        self.register_buffer('running_var', np.ones(channels, dtype=dtype))

    def forward(self, x):
        return F.batch_norm(x, self, mode=self.mode)


def count_params(module):
    """
    Total number of scalar parameters, biases, BN affine terms and learnable
    queries included. Running statistics are not parameters.
    """
    return sum(param.size for param in module.parameters())


def parameter_table(module):
    """
    Per-tensor parameter counts.

    Returns:
        list[dict]: One row per parameter with `name`, `shape` and `count`.
    """
    return [
        {'name': name, 'shape': list(param.shape), 'count': param.size}
        for name, param in module.named_parameters()
    ]
