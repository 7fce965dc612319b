"""Diversified temporal contexts.

Local contexts warp propagated reference features with decoded (or
accumulated) motion; non-local contexts aggregate reference content through
a shared linear attention layer whose key-value product is taken first, so
cost stays linear in pixel count. Scale 0 sees only the two primary
references; extended references join at scales 1 and 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import dwconv_block
from .errors import ShapeError
from .params import layout_slots
from .tensor import FLOAT, as_tensor, conv2d, softmax_rows, warp_bilinear


@dataclass
class ContextSet:
    """Per-scale local and non-local context tensors keyed by reference slot.

    Slots name the reference role (back/fwd and their extended variants)
    rather than the source time: with the intra proxy two slots can share a
    source frame, so times alone would collide. sources maps slot -> time.
    """

    scale: int
    side: str
    sources: dict[str, int] = field(default_factory=dict)
    local: dict[str, np.ndarray] = field(default_factory=dict)
    nonlocal_: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def layout_mask(self) -> tuple[bool, bool]:
        return ("back_ext" in self.local, "fwd_ext" in self.local)

    @property
    def slots(self) -> tuple[str, ...]:
        return slots_for_scale(self.layout_mask, self.scale)


def slots_for_scale(mask: tuple[bool, bool], scale: int) -> tuple[str, ...]:
    """Reference slots present at a scale; extended slots only at 1 and 2."""
    if scale == 0:
        return ("back", "fwd")
    return layout_slots(mask)


def extract_local(features: dict[str, np.ndarray], flows: dict[str, np.ndarray],
                  slots: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Warp each scheduled reference feature with its slot flow (already at
    the feature's scale)."""
    out = {}
    for slot in slots:
        if slot not in features:
            raise ShapeError(f"missing reference feature for slot {slot!r}")
        if slot not in flows:
            raise ShapeError(f"missing flow for slot {slot!r}")
        out[slot] = warp_bilinear(features[slot], flows[slot])
    return out


def embed_query(query_src: np.ndarray, params, scale: int) -> np.ndarray:
    return conv2d(query_src, *params.conv(f"attn{scale}.q"), kind="pointwise")


def embed_key_value(feature: np.ndarray, params, scale: int) -> tuple[np.ndarray, np.ndarray]:
    trunk = dwconv_block(feature, params, f"attn{scale}.trunk")
    k = conv2d(trunk, *params.conv(f"attn{scale}.k"), kind="pointwise")
    v = conv2d(trunk, *params.conv(f"attn{scale}.v"), kind="pointwise")
    return k, v


def _flatten(t: np.ndarray) -> np.ndarray:
    c = t.shape[0]
    return t.reshape(c, -1).T  # (HW, C)


def attend_linear(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Key-value-first attention: G = SM2(Q) (SM1(K)^T V); linear in pixels.

    SM1 normalizes keys over spatial positions per channel, SM2 normalizes
    queries over channels per position, so the implicit similarity rows sum
    to one without ever forming the HW x HW matrix.
    """
    if q.shape[0] != k.shape[0] or k.shape != v.shape:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, v {v.shape}")
    c, h, w = q.shape
    q2 = softmax_rows(_flatten(q).astype(np.float64), axis="rows")   # channels per position
    k1 = softmax_rows(_flatten(k).astype(np.float64), axis="cols")   # positions per channel
    ctx = k1.T @ _flatten(v).astype(np.float64)                      # (C, C) first
    g = q2 @ ctx
    return g.T.reshape(c, h, w).astype(FLOAT)


def attend_quadratic(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Explicit-order oracle: forms the full similarity matrix. Returns
    (output, similarity) for factorization and row-sum checks."""
    c, h, w = q.shape
    q2 = softmax_rows(_flatten(q).astype(np.float64), axis="rows")
    k1 = softmax_rows(_flatten(k).astype(np.float64), axis="cols")
    sim = q2 @ k1.T                                                  # (HW, HW)
    g = sim @ _flatten(v).astype(np.float64)
    return g.T.reshape(c, h, w).astype(FLOAT), sim


def linear_attention(query_src: np.ndarray, references: list[np.ndarray], params,
                     scale: int) -> list[np.ndarray]:
    """Shared-parameter non-local aggregation against each reference feature."""
    q = embed_query(as_tensor(query_src), params, scale)
    out = []
    for ref in references:
        k, v = embed_key_value(as_tensor(ref), params, scale)
        out.append(attend_linear(q, k, v))
    return out


def extract_nonlocal(query_src: np.ndarray, kv: dict[str, tuple[np.ndarray, np.ndarray]],
                     params, scale: int, slots: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Non-local contexts from precomputed key/value embeddings per slot.

    The encoder queries from the pre-quantization latent, the decoder from
    the reconstructed one; keys and values always come from decoded
    reference features, so only the query differs between the sides.
    """
    q = embed_query(query_src, params, scale)
    out = {}
    for slot in slots:
        if slot not in kv:
            raise ShapeError(f"missing key/value embedding for slot {slot!r}")
        k, v = kv[slot]
        out[slot] = attend_linear(q, k, v)
    return out
