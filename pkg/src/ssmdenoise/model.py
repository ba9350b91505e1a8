"""The full U-shaped denoising network.

Encoder stages (3-D convs, spatial downsampling in blocks 2, 4 and 6)
feed six scan-Mamba blocks whose serialization schemes rotate through
the six continuous orders; decoder stages mirror the encoder with
nearest-neighbor upsampling and resolution-matched additive skips.  The
reconstructor conv is zero-initialized so the untrained network is the
identity map on its input.

Bands are never resampled; only row/col extents are halved and doubled,
so the output cube always matches the input (bands, rows, cols).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scan
from .blocks import (Conv3dWeights, ResidualBlockWeights, conv3d, init_conv3d,
                     init_residual_block, residual_block, upsample_spatial, LRELU_SLOPE)
from .rng import Rng
from .ssm import (BidirectionalSsmLayerWeights, SelectiveSsmWeights,
                  bidirectional_ssm_layer, init_bidirectional_layer)
from .tensor import Tensor


@dataclass
class ModelConfig:
    base_channels: int = 32
    channels: tuple = None  # default (C, 2C, 2C, 4C, 4C, 8C)
    downsample_blocks: tuple = (2, 4, 6)  # 1-based block indices
    res_blocks: int = 2
    state_dim: int = 16
    scan_schemes: tuple = scan.SSCS_SCHEMES  # one tag per block, cycled
    bidirectional: bool = True

    def __post_init__(self):
        if self.channels is None:
            c = self.base_channels
            self.channels = (c, 2 * c, 2 * c, 4 * c, 4 * c, 8 * c)
        self.channels = tuple(self.channels)
        if len(self.channels) != 6:
            raise ValueError("expected six per-block channel counts")

    @property
    def n_blocks(self):
        return len(self.channels)

    @property
    def downsample_count(self):
        return len(self.downsample_blocks)

    def scheme_for_block(self, i: int) -> str:
        """1-based block index -> scan scheme tag."""
        return self.scan_schemes[(i - 1) % len(self.scan_schemes)]


@dataclass
class SscsMambaBlockWeights:
    res: list  # of ResidualBlockWeights
    layer: BidirectionalSsmLayerWeights
    scheme: str


@dataclass
class ModelWeights:
    config: ModelConfig
    feature_extractor: Conv3dWeights
    encoders: list  # of Conv3dWeights
    blocks: list  # of SscsMambaBlockWeights
    decoders: list  # of (Conv3dWeights, upsample: bool)
    reconstructor: Conv3dWeights


def init_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> ModelWeights:
    rng = Rng(seed)
    ch = cfg.channels
    fe = init_conv3d(1, ch[0], rng=rng.spawn(0), dtype=dtype)
    encoders, blocks = [], []
    prev = ch[0]
    for i in range(1, 7):
        stride = (1, 2, 2) if i in cfg.downsample_blocks else (1, 1, 1)
        encoders.append(init_conv3d(prev, ch[i - 1], stride=stride, rng=rng.spawn(10 + i), dtype=dtype))
        blocks.append(SscsMambaBlockWeights(
            res=[init_residual_block(ch[i - 1], rng.spawn(100 * i + r), dtype) for r in range(cfg.res_blocks)],
            layer=init_bidirectional_layer(ch[i - 1], cfg.state_dim, rng.spawn(1000 + i), dtype),
            scheme=cfg.scheme_for_block(i),
        ))
        prev = ch[i - 1]
    decoders = []
    dec_in = list(ch[::-1])  # (8C, 4C, 4C, 2C, 2C, C)
    dec_out = dec_in[1:] + [ch[0]]
    for j in range(6):
        up = (6 - j) in cfg.downsample_blocks  # mirrors encoder stage 6-j
        decoders.append((init_conv3d(dec_in[j], dec_out[j], rng=rng.spawn(20 + j), dtype=dtype), up))
    rec = init_conv3d(ch[0], 1, rng=None, zero=True, dtype=dtype)
    return ModelWeights(cfg, fe, encoders, blocks, decoders, rec)


def sscs_mamba_block(w: SscsMambaBlockWeights, f: Tensor, bidirectional=True) -> Tensor:
    """Residual conv blocks, then the gated SSM layer with its own shortcut."""
    for r in w.res:
        f = residual_block(r, f)
    p = scan.get_permutation(w.scheme, f.shape[2:])
    return f + bidirectional_ssm_layer(w.layer, f, p, bidirectional=bidirectional)


def validate_input_shape(cfg: ModelConfig, dims) -> None:
    b, h, w = dims
    div = 2 ** cfg.downsample_count
    if h % div or w % div:
        raise ValueError(f"spatial extents ({h}, {w}) must be divisible by {div}")


def forward(mw: ModelWeights, x: Tensor) -> Tensor:
    """Denoise a (batch, 1, bands, rows, cols) tensor; same shape out.

    The network predicts a correction added to its input, so with the
    zero-initialized reconstructor the initial map is the identity.
    """
    cfg = mw.config
    if x.data.ndim != 5 or x.shape[1] != 1:
        raise ValueError(f"expected (batch, 1, bands, rows, cols), got {x.shape}")
    validate_input_shape(cfg, x.shape[2:])

    f0 = conv3d(mw.feature_extractor, x)
    feats = []
    f = f0
    for enc, block in zip(mw.encoders, mw.blocks):
        f = conv3d(enc, f).leaky_relu(LRELU_SLOPE)
        f = sscs_mamba_block(block, f, bidirectional=cfg.bidirectional)
        feats.append(f)
    # decoder consumes skips from the encoder side at matching resolution
    skips = [feats[4], feats[3], feats[2], feats[1], feats[0], None]
    g = feats[5]
    for (conv_w, up), skip in zip(mw.decoders, skips):
        if up:
            g = upsample_spatial(g)
        g = conv3d(conv_w, g).leaky_relu(LRELU_SLOPE)
        if skip is not None:
            g = g + skip
    return x + conv3d(mw.reconstructor, g + f0)


def denoise_cube(mw: ModelWeights, cube: np.ndarray) -> np.ndarray:
    """Convenience wrapper for a single (bands, rows, cols) array.

    Runs with gradient recording disabled so intermediate activations
    are freed eagerly instead of being retained for a backward pass.
    """
    params = parameters(mw)
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        x = Tensor(cube[None, None].astype(mw.feature_extractor.kernel.dtype))
        return forward(mw, x).data[0, 0]
    finally:
        for p, s in zip(params, saved):
            p.requires_grad = s


# -- parameter bookkeeping -----------------------------------------------------


def _ssm_params(prefix, w: SelectiveSsmWeights):
    yield prefix + ".A_log", w.A_log
    yield prefix + ".B_w", w.B_w
    yield prefix + ".B_b", w.B_b
    yield prefix + ".C_w", w.C_w
    yield prefix + ".C_b", w.C_b
    yield prefix + ".dt_w", w.dt_w
    yield prefix + ".dt_b", w.dt_b


def _layer_params(prefix, w: BidirectionalSsmLayerWeights):
    yield prefix + ".norm_w", w.norm_w
    yield prefix + ".norm_b", w.norm_b
    yield prefix + ".gate_w", w.gate_w
    yield prefix + ".gate_b", w.gate_b
    yield prefix + ".val_w", w.val_w
    yield prefix + ".val_b", w.val_b
    yield prefix + ".conv_f_w", w.conv_f_w
    yield prefix + ".conv_f_b", w.conv_f_b
    yield from _ssm_params(prefix + ".ssm_f", w.ssm_f)
    yield prefix + ".conv_b_w", w.conv_b_w
    yield prefix + ".conv_b_b", w.conv_b_b
    yield from _ssm_params(prefix + ".ssm_b", w.ssm_b)
    yield prefix + ".out_w", w.out_w
    yield prefix + ".out_b", w.out_b


def _conv_params(prefix, w: Conv3dWeights):
    yield prefix + ".kernel", w.kernel
    yield prefix + ".bias", w.bias


def named_parameters(mw: ModelWeights):
    """Deterministic (name, Tensor) iteration over every parameter."""
    yield from _conv_params("fe", mw.feature_extractor)
    for i, enc in enumerate(mw.encoders, 1):
        yield from _conv_params(f"enc{i}", enc)
    for i, blk in enumerate(mw.blocks, 1):
        for r, res in enumerate(blk.res, 1):
            yield from _conv_params(f"block{i}.res{r}.conv", res.conv)
            yield f"block{i}.res{r}.norm_w", res.norm_w
            yield f"block{i}.res{r}.norm_b", res.norm_b
        yield from _layer_params(f"block{i}.ssm", blk.layer)
    for j, (dec, _) in enumerate(mw.decoders, 1):
        yield from _conv_params(f"dec{j}", dec)
    yield from _conv_params("rec", mw.reconstructor)


def parameters(mw: ModelWeights):
    return [t for _, t in named_parameters(mw)]


def parameter_count(mw: ModelWeights) -> int:
    return sum(t.size for t in parameters(mw))
