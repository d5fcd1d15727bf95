"""
The HSDT building blocks: S3Conv, GSSA, SM-FFN and the transformer block
that stacks them.

All layers take feature cubes [H, W, D, C] (optionally batched) and never
mix the band axis D except through the spectral conv kernel and the GSSA
attention map, so one parameter set serves any band count.
"""
import logging

import numpy as np

from . import functional as F
from .autograd import Tensor, resolve_dtype
from .exceptions import BandCountError, ShapeError
from .modules import BatchNorm, Conv3d, Linear, Module, ModuleList

logger = logging.getLogger(__name__)

PARALLEL2 = 'parallel2'
SINGLE_SPATIAL = 'single_spatial'
SEQUENTIAL = 'sequential'
CONV3D = 'conv3d'

VARIANT_CHOICES = [
    (PARALLEL2, 'S3Conv (two stacked spatial convs + parallel spectral conv)'),
    (SINGLE_SPATIAL, 'S3Conv-S (one spatial conv + parallel spectral conv)'),
    (SEQUENTIAL, 'S3Conv-Seq (spatial conv then spectral conv)'),
    (CONV3D, 'Conv3D baseline (dense 3x3x3)'),
]

SELF_ATTENTION = 'sa'
CROSS_ATTENTION = 'ca'

ATTENTION_CHOICES = [
    (SELF_ATTENTION, 'self-attention over pooled band features'),
    (CROSS_ATTENTION, 'cross-attention against learnable queries'),
]


def _attention_mode(mode):
    mode = str(mode).lower()
    if mode not in (SELF_ATTENTION, CROSS_ATTENTION):
        raise ValueError(f"Unknown attention mode '{mode}'.")
    return mode


class S3Conv(Module):
    """
    Spatial-spectral separable convolution.

    Spatial kernels span 3x3 pixels and a single band; the spectral kernel
    spans 3 bands at a single pixel. Spatial stride (1 or 2) applies to H and
    W only. Batch normalization is applied by the enclosing block.

    Variants:
        parallel2: spatial -> spatial, plus spectral, summed.
        single_spatial: one spatial conv plus spectral, summed.
        sequential: spectral conv applied to the spatial conv output.
        conv3d: one dense 3x3x3 conv.
    """

    def __init__(self, in_channels, out_channels, rng, stride=1, variant=PARALLEL2, dtype=None):
        super().__init__()
        if variant not in dict(VARIANT_CHOICES):
            raise ValueError(f"Unknown S3Conv variant '{variant}'.")
        if stride not in (1, 2):
            raise ValueError(f"Spatial stride must be 1 or 2, got {stride}.")
        self.variant = variant
        self.in_channels = in_channels
        self.out_channels = out_channels
        strides = (stride, stride, 1)

        if variant == CONV3D:
            self.dense = Conv3d(in_channels, out_channels, (3, 3, 3), rng,
                                stride=strides, padding=(1, 1, 1), dtype=dtype)
            return

        spatial = [Conv3d(in_channels, out_channels, (3, 3, 1), rng,
                          stride=strides, padding=(1, 1, 0), dtype=dtype)]
        if variant == PARALLEL2:
            spatial.append(Conv3d(out_channels, out_channels, (3, 3, 1), rng,
                                  padding=(1, 1, 0), dtype=dtype))
        self.spatial = ModuleList(spatial)

        if variant == SEQUENTIAL:
            self.spectral = Conv3d(out_channels, out_channels, (1, 1, 3), rng,
                                   padding=(0, 0, 1), dtype=dtype)
        else:
            self.spectral = Conv3d(in_channels, out_channels, (1, 1, 3), rng,
                                   stride=strides, padding=(0, 0, 1), dtype=dtype)

    def forward(self, x):
        if x.shape[-1] != self.in_channels:
            raise ShapeError(
                f"S3Conv built for {self.in_channels} channels, got {x.shape[-1]}", axis='channel')
        if self.variant == CONV3D:
            return self.dense(x)
        y = x
        for conv in self.spatial:
            y = conv(y)
        if self.variant == SEQUENTIAL:
            return self.spectral(y)
        return y + self.spectral(x)


def band_mixing(value, attention):
    """
    Aggregate bands with a shared attention map as a grouped 1x1x1 convolution.

    Spectral and channel axes are swapped so bands become conv channels, the
    batch is folded into conv groups, and each sample's D x D map becomes the
    kernel of its group.

    Args:
        value (Tensor): [..., H, W, D, C].
        attention (Tensor): [..., D, D], row i holding band i's source weights.

    Returns:
        Tensor: [..., H, W, D, C] with out[.., i, :] = sum_j A[i, j] value[.., j, :].
    """
    batched = value.ndim == 5
    if not batched:
        value = value.reshape((1,) + value.shape)
        attention = attention.reshape((1,) + attention.shape)
    batch, height, width, bands, channels = value.shape

    swapped = value.transpose(1, 2, 4, 0, 3).reshape(1, height, width, channels, batch * bands)
    kernel = attention.transpose(2, 0, 1).reshape(1, 1, 1, bands, batch * bands)
    mixed = F.conv3d(swapped, kernel, groups=batch)
    out = mixed.reshape(height, width, channels, batch, bands).transpose(3, 0, 1, 4, 2)
    return out if batched else out.reshape(out.shape[1:])


class GSSA(Module):
    """
    Guided spectral self-attention.

    Queries and keys are the spatially pooled band features [D, C]; in
    cross-attention mode the learnable queries [d_train, C] replace the pooled
    query. Only the value has a projection; a post projection and a residual
    follow the band aggregation.

    Attributes:
        d_train (int): Band count the learnable queries were sized for.
    """

    def __init__(self, channels, rng, d_train=31, dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.channels = channels
        self.d_train = d_train
        self.value = Linear(channels, channels, rng, dtype=dtype)
        self.post = Linear(channels, channels, rng, dtype=dtype)
        self.queries = Tensor(rng.normal(0.0, 1.0 / np.sqrt(channels), size=(d_train, channels)),
                              requires_grad=True, dtype=dtype)

    def attention_map(self, x, mode=SELF_ATTENTION):
        """
        Row-stochastic D x D band attention.

        Raises:
            BandCountError: Cross-attention on an input whose band count differs
                from d_train.
        """
        mode = _attention_mode(mode)
        if x.shape[-1] != self.channels:
            raise ShapeError(
                f"GSSA built for {self.channels} channels, got {x.shape[-1]}", axis='channel')
        keys = F.global_avg_pool(x)
        if mode == SELF_ATTENTION:
            logits = F.einsum('...ic,...jc->...ij', keys, keys)
        else:
            bands = x.shape[-2]
            if bands != self.d_train:
                raise BandCountError(bands, self.d_train)
            logits = F.einsum('ic,...jc->...ij', self.queries, keys)
        return F.softmax(logits, axis=-1)

    def forward(self, x, mode=SELF_ATTENTION):
        attention = self.attention_map(x, mode)
        value = self.value(x)
        aggregated = F.einsum('...ij,...hwjc->...hwic', attention, value)
        return self.post(aggregated) + x

    def fast_forward(self, x, mode=SELF_ATTENTION):
        """Same contract as `forward`, aggregating through `band_mixing`."""
        attention = self.attention_map(x, mode)
        aggregated = band_mixing(self.value(x), attention)
        return self.post(aggregated) + x


class SMFFN(Module):
    """
    Self-modulated feed-forward network.

    A vanilla FFN w1(gelu(w2 x)) plus the SM branch F * sigmoid(W), where
    [F | W] = w3(x) is split by channel index, F first.
    """

    def __init__(self, channels, rng, dtype=None):
        super().__init__()
        self.channels = channels
        self.w3 = Linear(channels, 2 * channels, rng, dtype=dtype)
        self.w2 = Linear(channels, 2 * channels, rng, dtype=dtype)
        self.w1 = Linear(2 * channels, channels, rng, dtype=dtype)

    def sm_branch(self, x):
        expanded = self.w3(x)
        features = expanded[..., :self.channels]
        weights = expanded[..., self.channels:]
        return features * F.sigmoid(weights)

    def forward(self, x):
        if x.shape[-1] != self.channels:
            raise ShapeError(
                f"SM-FFN built for {self.channels} channels, got {x.shape[-1]}", axis='channel')
        return self.w1(F.gelu(self.w2(x))) + self.sm_branch(x)


class TransformerBlock(Module):
    """
    X^ = BN(S3Conv(X));  Y = SM-FFN(GSSA(X^) + X^).

    GSSA carries its own residual, and the block adds X^ once more.
    """

    def __init__(self, in_channels, out_channels, rng, stride=1, d_train=31,
                 variant=PARALLEL2, dtype=None):
        super().__init__()
        self.s3conv = S3Conv(in_channels, out_channels, rng, stride=stride, variant=variant, dtype=dtype)
        self.bn = BatchNorm(out_channels, dtype=dtype)
        self.gssa = GSSA(out_channels, rng, d_train=d_train, dtype=dtype)
        self.smffn = SMFFN(out_channels, rng, dtype=dtype)

    def forward(self, x, mode=SELF_ATTENTION, fast=False):
        features = self.bn(self.s3conv(x))
        if fast:
            attended = self.gssa.fast_forward(features, mode)
        else:
            attended = self.gssa(features, mode)
        return self.smffn(attended + features)

    def attention_map(self, x, mode=SELF_ATTENTION):
        """Attention map of this block's GSSA for input `x`, plus the block output."""
        features = self.bn(self.s3conv(x))
        attention = self.gssa.attention_map(features, mode)
        return attention, self.smffn(self.gssa(features, mode) + features)
