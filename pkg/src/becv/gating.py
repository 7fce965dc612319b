"""Conditional-coding-aware context gating and feature generation.

The gate runs one throwaway round of conditional coding: the current-scale
latent is fused with every context, squashed through a sigmoid, and the
resulting mask modulates a pointwise reduction of the same contexts. A
saturated-closed mask suppresses harmful contexts (occlusion, bad motion);
saturated-open passes the reduction through unchanged.
"""

from __future__ import annotations

import numpy as np

from .blocks import depthconv_block
from .contexts import ContextSet, slots_for_scale
from .errors import ShapeError
from .params import layout_tag
from .tensor import FLOAT, conv2d, sigmoid


def _ordered(ctx: dict[str, np.ndarray], slots: tuple[str, ...], what: str) -> list[np.ndarray]:
    missing = [s for s in slots if s not in ctx]
    if missing or len(ctx) != len(slots):
        raise ShapeError(
            f"{what} contexts do not match the schedule layout: "
            f"have {sorted(ctx)}, need {list(slots)}"
        )
    return [ctx[s] for s in slots]


def gate(latent: np.ndarray, contexts: ContextSet, params) -> tuple[np.ndarray, np.ndarray]:
    """Fuse one scale's contexts; returns (gated context, gate values).

    Missing extended slots are simply absent from the concatenation; the
    layout is fixed by the schedule, and each layout carries its own weights.
    """
    slots = contexts.slots
    locs = _ordered(contexts.local, slots, "local")
    nls = _ordered(contexts.nonlocal_, slots, "non-local")
    tag = layout_tag(contexts.layout_mask if contexts.scale else (False, False))
    prefix = f"gate{contexts.scale}.{tag}"
    everything = np.concatenate([latent] + locs + nls, axis=0)
    m = sigmoid(depthconv_block(everything, params, prefix + ".mask"))
    reduced = conv2d(
        np.concatenate(locs + nls, axis=0), *params.conv(prefix + ".reduce"), kind="pointwise"
    )
    return (m * reduced).astype(FLOAT), m


def prior_gate(local2: dict[str, np.ndarray], params, mask: tuple[bool, bool]) -> np.ndarray:
    """Scale-2 gated fusion of the local contexts alone.

    This is the conditional prior for the symbol model: it must be
    computable before the latent is entropy-decoded, so it sees only
    motion-aligned content (decoded flows, decoded reference features).
    """
    slots = slots_for_scale(mask, 2)
    locs = _ordered(local2, slots, "prior local")
    tag = layout_tag(mask)
    prefix = f"prior.{tag}"
    cat = np.concatenate(locs, axis=0)
    m = sigmoid(depthconv_block(cat, params, prefix + ".mask"))
    reduced = conv2d(cat, *params.conv(prefix + ".reduce"), kind="pointwise")
    return (m * reduced).astype(FLOAT)


def feature_generation(y0_hat: np.ndarray, c0_hat: np.ndarray | None,
                       params) -> tuple[np.ndarray, np.ndarray]:
    """Produce the propagated scale-0 feature and the clipped reconstruction.

    Intra frames pass c0_hat=None and get a zero context block; the residual
    path adds the reconstructed latent so an all-zero generator is identity.
    """
    d0 = params.config.ctx_channels[0]
    if c0_hat is None:
        c0_hat = np.zeros((d0,) + y0_hat.shape[1:], dtype=FLOAT)
    if c0_hat.shape != (d0,) + y0_hat.shape[1:]:
        raise ShapeError(f"gated context shape {c0_hat.shape} does not fit {y0_hat.shape}")
    h = depthconv_block(np.concatenate([y0_hat, c0_hat], axis=0), params, "fg.block1")
    h = depthconv_block(h, params, "fg.block2")
    feature = h + y0_hat
    recon = conv2d(feature, *params.conv("recon"), kind="full")
    return feature, np.clip(recon, 0.0, 1.0).astype(FLOAT)
