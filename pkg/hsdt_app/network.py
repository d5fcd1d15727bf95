"""
The U-shaped HSDT: head block, strided encoder blocks, optional inner blocks,
decoder stages of (trilinear x2 spatial upsample, block) with additive skips,
and a zero-initialized 1x1x1 tail predicting the residual image.
"""
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import functional as F
from .autograd import Tensor, resolve_dtype
from .blocks import (CONV3D, CROSS_ATTENTION, PARALLEL2, SELF_ATTENTION, VARIANT_CHOICES,
                     TransformerBlock)
from .exceptions import ConfigError, PaddingRequiredError, ShapeError
from .modules import Conv3d, Module, ModuleList, count_params

logger = logging.getLogger(__name__)

ALTERNATE = 'alternate'
DEFAULT_CA_PROBABILITY = 0.5


@dataclass(frozen=True)
class HsdtConfig:
    """
    Network shape.

    Attributes:
        base_channels (int): Feature width C0, constant across scales.
        n_scales (int): Number of spatial scales; n_scales - 1 downsamplings.
        extra_inner_blocks (int): Blocks at the coarsest scale (1 for HSDT-L).
        d_train (int): Band count of the learnable queries.
        input_channels (int): 1, or 2 when a noise-level map is fed alongside.
        variant (str): S3Conv variant used by every block.
    """
    base_channels: int = 30
    n_scales: int = 3
    extra_inner_blocks: int = 0
    d_train: int = 31
    input_channels: int = 1
    variant: str = PARALLEL2

    def __post_init__(self):
        errors = {}
        if self.base_channels < 1:
            errors['base_channels'] = ['Must be at least 1.']
        if self.n_scales < 1:
            errors['n_scales'] = ['Must be at least 1.']
        if self.extra_inner_blocks < 0:
            errors['extra_inner_blocks'] = ['Must not be negative.']
        if self.d_train < 1:
            errors['d_train'] = ['Must be at least 1.']
        if self.input_channels not in (1, 2):
            errors['input_channels'] = ['Must be 1 or 2.']
        if self.variant not in dict(VARIANT_CHOICES):
            errors['variant'] = [f"Unknown S3Conv variant '{self.variant}'."]
        if errors:
            raise ConfigError('Invalid HSDT configuration.', errors)

    @property
    def downsampling(self):
        return 2 ** (self.n_scales - 1)

    def as_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return replace(self, **changes)


# Width 30 puts HSDT-S at ~0.127M parameters; M doubles it, L adds one inner block.
PRESETS = {
    'hsdt-s': HsdtConfig(base_channels=30),
    'hsdt-m': HsdtConfig(base_channels=60),
    'hsdt-l': HsdtConfig(base_channels=60, extra_inner_blocks=1),
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown preset '{name}'.", {'config': [f"Choose one of {sorted(PRESETS)}."]})


class HsdtModel(Module):
    """
    The full denoising network for one configuration.

    Attributes:
        config (HsdtConfig): Shape the model was built for.
    """

    def __init__(self, config, rng, dtype=None):
        super().__init__()
        dtype = resolve_dtype(dtype)
        self.config = config
        self.dtype = dtype
        width = config.base_channels

        def block(in_channels, stride=1):
            return TransformerBlock(in_channels, width, rng, stride=stride, d_train=config.d_train,
                                    variant=config.variant, dtype=dtype)

        self.head = ModuleList([block(config.input_channels)])
        self.encoder = ModuleList([block(width, stride=2) for _ in range(config.n_scales - 1)])
        self.inner = ModuleList([block(width) for _ in range(config.extra_inner_blocks)])
        self.decoder = ModuleList([block(width) for _ in range(config.n_scales - 1)])
        self.tail = Conv3d(width, 1, (1, 1, 1), rng, dtype=dtype)
        self.tail.weight.data[...] = 0
        self.tail.bias.data[...] = 0

    def blocks(self):
        """Yield (dotted stage name, block) in execution order."""
        for stage in ('head', 'encoder', 'inner'):
            for index, block in enumerate(getattr(self, stage)):
                yield f"{stage}.{index}", block
        for index, block in enumerate(self.decoder):
            yield f"decoder.{index}", block

    def resolve_attention(self, attn_mode, bands, rng=None, ca_probability=DEFAULT_CA_PROBABILITY):
        """
        Pick the GSSA mode for one forward pass.

        `alternate` draws cross-attention with probability `ca_probability`;
        it falls back to self-attention when the band count does not match the
        learnable queries.
        """
        mode = str(attn_mode).lower()
        if mode in (SELF_ATTENTION, CROSS_ATTENTION):
            return mode
        if mode != ALTERNATE:
            raise ValueError(f"Unknown attention mode '{attn_mode}'.")
        if rng is None:
            raise ValueError("Alternate attention needs a random generator.")
        draw = rng.random() < ca_probability
        if draw and bands == self.config.d_train:
            return CROSS_ATTENTION
        return SELF_ATTENTION

    def _features(self, hsi, noise_map):
        if hsi.ndim not in (3, 4):
            raise ShapeError(f"expected [H, W, D] or [B, H, W, D], got {hsi.shape}", axis='rank')
        factor = self.config.downsampling
        height, width = hsi.shape[-3], hsi.shape[-2]
        for axis, extent in (('height', height), ('width', width)):
            if extent % factor:
                raise PaddingRequiredError(
                    f"{axis} {extent} is not divisible by {factor}; pad the input first.")
        features = hsi.reshape(hsi.shape + (1,))
        if self.config.input_channels == 2:
            if noise_map is None:
                raise ShapeError("this model needs a noise-level map", axis='channel')
            noise_map = noise_map if isinstance(noise_map, Tensor) else Tensor(noise_map, dtype=hsi.dtype)
            if noise_map.shape != hsi.shape:
                raise ShapeError(
                    f"noise map shape {noise_map.shape} differs from image {hsi.shape}", axis='channel')
            features = F.concat([features, noise_map.reshape(noise_map.shape + (1,))], axis=-1)
        elif noise_map is not None:
            raise ShapeError("this model takes no noise-level map", axis='channel')
        return features

    def _run(self, hsi, noise_map, mode, fast, maps):
        def apply(name, block, x):
            if maps is None:
                return block(x, mode, fast=fast)
            attention, out = block.attention_map(x, mode)
            maps.append((name, attention))
            return out

        x = self._features(hsi, noise_map)
        x = apply('head.0', self.head[0], x)
        skips = [x]
        for index, block in enumerate(self.encoder):
            x = apply(f"encoder.{index}", block, x)
            skips.append(x)
        skips.pop()
        for index, block in enumerate(self.inner):
            x = apply(f"inner.{index}", block, x)
        for index, block in enumerate(self.decoder):
            x = F.trilinear_upsample(x, (2, 2, 1))
            x = apply(f"decoder.{index}", block, x) + skips.pop()
        residual = self.tail(x)
        return hsi + residual.reshape(hsi.shape)

    def forward(self, hsi, noise_map=None, attn_mode=SELF_ATTENTION, rng=None,
                ca_probability=DEFAULT_CA_PROBABILITY, fast=False):
        """
        Denoise an HSI: output = input + predicted residual.

        Args:
            hsi (Tensor | np.ndarray): [H, W, D] or [B, H, W, D].
            noise_map (Tensor | np.ndarray | None): Same shape, for 2-channel models.
            attn_mode (str): 'sa', 'ca' or 'alternate'.
            rng (np.random.Generator | None): Needed for 'alternate'.
            fast (bool): Use the grouped-convolution GSSA path.

        Raises:
            PaddingRequiredError: H or W not divisible by 2 ** (n_scales - 1).
            BandCountError: 'ca' with a band count other than d_train.
        """
        hsi = hsi if isinstance(hsi, Tensor) else Tensor(hsi, dtype=self.dtype)
        mode = self.resolve_attention(attn_mode, hsi.shape[-1], rng, ca_probability)
        return self._run(hsi, noise_map, mode, fast, None)

    def attention_maps(self, hsi, attn_mode=SELF_ATTENTION, noise_map=None):
        """
        D x D attention map of every block for one input.

        Batch norm runs on its running statistics; the training flag is restored afterwards.

        Returns:
            list[tuple[str, np.ndarray]]: (block name, map) in execution order.
        """
        hsi = hsi if isinstance(hsi, Tensor) else Tensor(hsi, dtype=self.dtype)
        mode = self.resolve_attention(attn_mode, hsi.shape[-1])
        maps = []
        training = self.training
        self.eval()
        try:
            self._run(hsi, noise_map, mode, False, maps)
        finally:
            self.train(training)
        return [(name, attention.data) for name, attention in maps]


def build_model(config, seed, dtype=None):
    """
    Build an HSDT with deterministic parameters.

    Args:
        config (HsdtConfig): Network shape.
        seed (int): Initialization seed; equal seeds give bit-identical models.
        dtype: Parameter precision (DTYPE setting by default).
    """
    model = HsdtModel(config, np.random.default_rng(seed), dtype=dtype)
    logger.debug("Built %s with %d parameters (seed %d).", config, count_params(model), seed)
    return model


def conv3d_baseline(config):
    """The same configuration with every S3Conv swapped for a dense Conv3D."""
    return config.replace(variant=CONV3D)


def pad_to_multiple(hsi, factor):
    """
    Reflect-pad the bottom and right edges of [H, W, D] so H and W divide by `factor`.

    Returns:
        tuple[np.ndarray, tuple[int, int]]: Padded image and the original (H, W).
    """
    hsi = np.asarray(hsi)
    height, width = hsi.shape[:2]
    pad_h, pad_w = -height % factor, -width % factor
    if pad_h or pad_w:
        hsi = np.pad(hsi, ((0, pad_h), (0, pad_w), (0, 0)), mode='reflect' if min(height, width) > 1 else 'edge')
    return hsi, (height, width)


def denoise(model, hsi, noise_map=None, attn_mode=SELF_ATTENTION, fast=True):
    """
    Eval-mode inference on an image of any spatial size: pad, run, crop back.

    Puts `model` in eval mode. `fast` selects the grouped-convolution GSSA path,
    which gives the same output as the matmul path.

    Returns:
        np.ndarray: Restored [H, W, D] in the model's precision.
    """
    model.eval()
    factor = model.config.downsampling
    padded, (height, width) = pad_to_multiple(hsi, factor)
    if noise_map is not None:
        noise_map, _ = pad_to_multiple(noise_map, factor)
    out = model(padded.astype(model.dtype), noise_map=noise_map, attn_mode=attn_mode, fast=fast)
    return out.data[:height, :width]


def constant_noise_map(model, hsi, sigma):
    """A constant noise-level map (0-1 scale) for two-channel models, None otherwise."""
    if model.config.input_channels != 2:
        return None
    return np.full(np.shape(hsi), sigma, dtype=model.dtype)
