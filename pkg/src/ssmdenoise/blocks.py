"""Convolutional building blocks: 3-D convolution, instance
normalization, nearest-neighbor upsampling, and the residual block
(conv -> instance norm -> leaky ReLU with an identity shortcut).

Feature tensors are (batch, channels, bands, rows, cols).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import Rng
from .tensor import Tensor

LRELU_SLOPE = 0.01
NORM_EPS = 1e-5


@dataclass
class Conv3dWeights:
    kernel: Tensor  # (out_ch, in_ch, kb, kh, kw)
    bias: Tensor  # (out_ch,)
    stride: tuple = (1, 1, 1)
    padding: tuple | None = None  # symmetric zero pad per axis; None = "same"

    @property
    def pad(self):
        if self.padding is not None:
            return self.padding
        kb, kh, kw = self.kernel.shape[2:]
        if any(k % 2 == 0 for k in (kb, kh, kw)):
            raise ValueError("'same' padding requires odd kernel extents")
        return (kb // 2, kh // 2, kw // 2)


def init_conv3d(in_ch, out_ch, kernel=3, stride=(1, 1, 1), rng: Rng = None,
                zero=False, dtype=np.float32) -> Conv3dWeights:
    """Kaiming-uniform fan-in init (zero=True for the reconstructor)."""
    k = (kernel,) * 3 if np.isscalar(kernel) else tuple(kernel)
    shape = (out_ch, in_ch) + k
    if zero:
        w = np.zeros(shape)
    else:
        fan_in = in_ch * int(np.prod(k))
        bound = float(np.sqrt(6.0 / fan_in))
        w = rng.uniform(-bound, bound, size=shape)
    return Conv3dWeights(
        kernel=Tensor(w, requires_grad=True, dtype=dtype),
        bias=Tensor(np.zeros(out_ch), requires_grad=True, dtype=dtype),
        stride=tuple(stride),
    )


def conv3d(w: Conv3dWeights, f: Tensor) -> Tensor:
    """Strided cross-correlation with symmetric zero padding."""
    nb, cin = f.shape[0], f.shape[1]
    cout, cin_w, kb, kh, kw = w.kernel.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels, kernel expects {cin_w}")
    pb, ph, pw = w.pad
    sb, sh, sw = w.stride
    xd = f.data
    for ax, (ext, kk, pp) in enumerate(zip(f.shape[2:], (kb, kh, kw), (pb, ph, pw))):
        if ext + 2 * pp < kk:
            raise ValueError(f"extent {ext} too small for kernel {kk} on axis {ax}")
    pad = np.pad(xd, ((0, 0), (0, 0), (pb, pb), (ph, ph), (pw, pw)))
    win = sliding_window_view(pad, (kb, kh, kw), axis=(2, 3, 4))[:, :, ::sb, ::sh, ::sw]
    kernel, bias = w.kernel, w.bias
    y = np.einsum("ncbhwijk,ocijk->nobhw", win, kernel.data, optimize=True)
    y += bias.data[None, :, None, None, None]
    ob, oh, ow = y.shape[2:]

    def bwd(g):
        if bias.requires_grad:
            bias._accum(g.sum(axis=(0, 2, 3, 4)))
        if kernel.requires_grad:
            kernel._accum(np.einsum("nobhw,ncbhwijk->ocijk", g, win, optimize=True))
        if f.requires_grad:
            gpad = np.zeros_like(pad)
            for i in range(kb):
                for j in range(kh):
                    for k in range(kw):
                        patch = np.einsum("nobhw,oc->ncbhw", g, kernel.data[:, :, i, j, k], optimize=True)
                        gpad[:, :, i : i + ob * sb : sb, j : j + oh * sh : sh, k : k + ow * sw : sw] += patch
            b0, h0, w0 = xd.shape[2:]
            f._accum(gpad[:, :, pb : pb + b0, ph : ph + h0, pw : pw + w0])

    return Tensor._node(np.ascontiguousarray(y), (f, kernel, bias), bwd, "conv3d")


def instance_norm(f: Tensor, weight: Tensor, bias: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalize each channel slice over (bands, rows, cols), then affine."""
    axes = (2, 3, 4)
    m = f.mean(axis=axes, keepdims=True)
    centered = f - m
    var = centered.square().mean(axis=axes, keepdims=True)
    wn = weight.reshape(1, weight.size, 1, 1, 1)
    bn = bias.reshape(1, bias.size, 1, 1, 1)
    return centered / (var + eps).sqrt() * wn + bn


def upsample_spatial(f: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling of the row/col axes (bands kept)."""
    nb, c, b, h, w = f.shape
    out_data = np.repeat(np.repeat(f.data, 2, axis=3), 2, axis=4)

    def bwd(g):
        if f.requires_grad:
            f._accum(g.reshape(nb, c, b, h, 2, w, 2).sum(axis=(4, 6)))

    return Tensor._node(out_data, (f,), bwd, "upsample")


@dataclass
class ResidualBlockWeights:
    conv: Conv3dWeights
    norm_w: Tensor
    norm_b: Tensor


def init_residual_block(ch, rng: Rng, dtype=np.float32) -> ResidualBlockWeights:
    return ResidualBlockWeights(
        conv=init_conv3d(ch, ch, rng=rng, dtype=dtype),
        norm_w=Tensor(np.ones(ch), requires_grad=True, dtype=dtype),
        norm_b=Tensor(np.zeros(ch), requires_grad=True, dtype=dtype),
    )


def residual_block(w: ResidualBlockWeights, f: Tensor) -> Tensor:
    """f + LReLU(InstanceNorm(Conv3D(f))); conv must preserve shape."""
    y = conv3d(w.conv, f)
    if y.shape != f.shape:
        raise ValueError(f"residual conv changed shape {f.shape} -> {y.shape}")
    return instance_norm(y, w.norm_w, w.norm_b).leaky_relu(LRELU_SLOPE) + f
