"""Contextual transform ladder, quantization, and the conditional symbol model.

The analysis ladder runs three stride-2 stages, concatenating the gated
context of each scale before the next stage; synthesis mirrors it with
conv + depth-to-space stages. Quantization divides by an effective step
chosen by qp and scaled per hierarchy layer, so lower layers get finer
steps. Latent symbols are coded against a discretized Gaussian whose mean
and scale a small conv head predicts from the decoder-reproducible prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rangecoder as rc
from .errors import ShapeError
from .params import CodecConfig, ParamSet
from .tensor import FLOAT, conv2d, depth_to_space, leaky_relu


def effective_step(config: CodecConfig, qp: int, weight: float) -> float:
    """base_step(qp) * (w_max / w_layer): larger weights quantize finer."""
    if not 0 <= qp < len(config.base_steps):
        raise ShapeError(f"qp must be in 0..{len(config.base_steps) - 1}, got {qp}")
    return config.base_steps[qp] * (max(config.quality_weights) / weight)


def quantize(y: np.ndarray, step: float) -> np.ndarray:
    return np.rint(y / FLOAT(step)).astype(np.int64)


def dequantize(q: np.ndarray, step: float) -> np.ndarray:
    return (q.astype(FLOAT) * FLOAT(step)).astype(FLOAT)


def analyze(x: np.ndarray, params: ParamSet, ctx_fn=None, intra: bool = False):
    """Frame -> latent at scale 3. Returns (latent, per-scale activations).

    ctx_fn(scale, y_scale) supplies the gated context for a scale; intra
    mode uses the context-free ladder and never consults ctx_fn.
    """
    p = "intra" if intra else "enc"
    h = leaky_relu(conv2d(x, *params.conv(p + ".conv_in"), kind="full"))
    scales = [h]
    for s, stage in enumerate(("down1", "down2", "down3")):
        ctx = None if intra else ctx_fn(s, h)
        hin = h if ctx is None else np.concatenate([h, ctx], axis=0)
        h = conv2d(hin, *params.conv(f"{p}.{stage}"), stride=2, kind="full")
        if s < 2:
            h = leaky_relu(h)
            scales.append(h)
    return h, tuple(scales)


def synthesize(latent: np.ndarray, params: ParamSet, ctx_fn=None, intra: bool = False):
    """Latent -> scale-0 activation; mirror of analyze.

    Returns (y0_hat, ctx0) where ctx0 is the scale-0 gated context for
    feature generation (None in intra mode).
    """
    p = "intra" if intra else "dec"
    h = latent
    ctx0 = None
    for scale, stage in ((2, "up1"), (1, "up2"), (0, "up3")):
        h = leaky_relu(depth_to_space(conv2d(h, *params.conv(f"{p}.{stage}"), kind="full")))
        ctx = None if intra else ctx_fn(scale, h)
        if scale > 0 and ctx is not None:
            h = np.concatenate([h, ctx], axis=0)
        elif scale == 0:
            ctx0 = ctx
    return h, ctx0


def latent_shape(config: CodecConfig, height: int, width: int) -> tuple[int, int, int]:
    if height % 8 or width % 8:
        raise ShapeError(f"padded dims must be multiples of 8, got {height}x{width}")
    return (config.enc_channels[3], height // 8, width // 8)


@dataclass
class SymbolModel:
    """Per-element discretized Gaussian over integer latent residuals.

    The mean is kept in float and subtracted before rounding (and added
    back at reconstruction), so coded symbols are genuinely zero-mean and
    a mean sitting on a rounding boundary cannot inflate them.
    """

    shape: tuple[int, int, int]
    mu_q: np.ndarray        # per-element mean, flat, step units
    table_idx: np.ndarray   # scale-table index per element


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


class SymbolCoder:
    """Latent symbol codec: a bank of integer Gaussian tables shared by both
    sides, indexed per element by the predicted scale."""

    def __init__(self, config: CodecConfig):
        self.config = config
        self.scale_table = np.exp(
            np.linspace(
                math.log(config.sigma_min), math.log(config.sigma_max), config.sigma_levels
            )
        )
        self.tables = [self._gaussian_table(s) for s in self.scale_table]

    @staticmethod
    def _gaussian_table(sigma: float) -> list[int]:
        pmf = np.zeros(rc.ALPHABET)
        lo = _phi(-(rc.CLIP + 0.5) / sigma)
        for s in range(-rc.CLIP, rc.CLIP + 1):
            hi = _phi((s + 0.5) / sigma)
            pmf[s + rc.CLIP + 1] = max(hi - lo, 0.0)
            lo = hi
        pmf[rc.ESCAPE] = max(2.0 * _phi(-(rc.CLIP + 0.5) / sigma), 1e-9)
        return rc.quantize_pmf(pmf)

    def _indices(self, sigma_q: np.ndarray) -> np.ndarray:
        # round the predicted scale up to the next table level
        idx = np.searchsorted(self.scale_table, sigma_q - 1e-9, side="left")
        return np.clip(idx, 0, len(self.scale_table) - 1).astype(np.int64)

    def model_intra(self, shape: tuple[int, int, int], step: float) -> SymbolModel:
        n = int(np.prod(shape))
        sigma_q = np.full(n, self.config.sigma_intra / step)
        return SymbolModel(
            shape=shape,
            mu_q=np.zeros(n, dtype=FLOAT),
            table_idx=self._indices(sigma_q),
        )

    def model_from_prior(self, prior: np.ndarray, step: float, params: ParamSet) -> SymbolModel:
        """Conditional model: the head maps the scale-2 prior to per-element
        mean and raw scale; identical on encoder and decoder by construction."""
        c3 = self.config.enc_channels[3]
        out = conv2d(prior, *params.conv("head"), stride=2, kind="full")
        if out.shape[0] != 2 * c3:
            raise ShapeError(f"model head produced {out.shape[0]} channels, expected {2 * c3}")
        mu_q = (out[:c3].astype(np.float64) / step).astype(FLOAT)
        raw = out[c3:].astype(np.float64)
        sigma_q = np.logaddexp(0.0, raw) / step  # softplus, then step scaling
        sigma_q = np.clip(sigma_q, self.config.sigma_min, self.config.sigma_max)
        return SymbolModel(
            shape=(c3,) + out.shape[1:],
            mu_q=mu_q.ravel(),
            table_idx=self._indices(sigma_q.ravel()),
        )

    def quantize_symbols(self, y: np.ndarray, step: float, model: SymbolModel) -> np.ndarray:
        """Mean-centered quantization: round(y/step - mu)."""
        if y.shape != model.shape:
            raise ShapeError(f"latent {y.shape} does not match model {model.shape}")
        centered = y.reshape(-1) / FLOAT(step) - model.mu_q
        return np.rint(centered).astype(np.int64).reshape(model.shape)

    def reconstruct(self, symbols: np.ndarray, step: float, model: SymbolModel) -> np.ndarray:
        """Inverse of quantize_symbols up to the quantization error."""
        vals = (symbols.reshape(-1).astype(FLOAT) + model.mu_q) * FLOAT(step)
        return vals.astype(FLOAT).reshape(model.shape)

    def encode(self, symbols: np.ndarray, model: SymbolModel) -> bytes:
        flat = symbols.reshape(-1)
        if flat.shape != model.mu_q.shape:
            raise ShapeError(f"symbols {symbols.shape} do not match model {model.shape}")
        return rc.encode_symbols(flat, self.tables, model.table_idx)

    def decode(self, payload: bytes, model: SymbolModel) -> np.ndarray:
        res = rc.decode_symbols(payload, model.mu_q.size, self.tables, model.table_idx)
        return res.reshape(model.shape)
