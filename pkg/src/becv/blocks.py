"""The two small conv blocks used across the codec.

DWConv block: 1x1 -> LeakyReLU -> depthwise 3x3 -> LeakyReLU -> 1x1 with an
identity skip; feeds key/value embeddings. DepthConv block: depthwise 3x3,
then a pointwise projection and a channel-wise feed-forward stage with a
residual; realizes gating and feature generation.
"""

from __future__ import annotations

import numpy as np

from .tensor import conv2d, leaky_relu


def dwconv_block(x: np.ndarray, params, prefix: str) -> np.ndarray:
    h = leaky_relu(conv2d(x, *params.conv(prefix + ".pw1"), kind="pointwise"))
    h = leaky_relu(conv2d(h, *params.conv(prefix + ".dw"), kind="depthwise"))
    h = conv2d(h, *params.conv(prefix + ".pw2"), kind="pointwise")
    return x + h


def depthconv_block(x: np.ndarray, params, prefix: str) -> np.ndarray:
    h = leaky_relu(conv2d(x, *params.conv(prefix + ".dw"), kind="depthwise"))
    h = conv2d(h, *params.conv(prefix + ".pw"), kind="pointwise")
    f = conv2d(h, *params.conv(prefix + ".ffn1"), kind="pointwise")
    f = conv2d(leaky_relu(f), *params.conv(prefix + ".ffn2"), kind="pointwise")
    return h + f
