"""Motion estimation, compression, and accumulation.

Motion is estimated by exhaustive per-block SAD search, coded jointly for
both directions (quarter-pel fixed point, half-resolution, static geometric
prior through the shared range coder), and decoded motion is composed into
predicted flows toward non-adjacent references at zero extra motion cost.

Flow convention: v_{r->t}(p) is added to p to sample frame r (backward
warping), channel 0 = dx, channel 1 = dy, units of pixels.
"""

from __future__ import annotations

import numpy as np

from . import rangecoder as rc
from .errors import ShapeError
from .tensor import FLOAT, as_tensor, check_finite, conv2d, resample, warp_bilinear

QUARTER_PEL = 4  # fixed-point denominator for coded motion

_ZERO_PROB = 0.995     # static prior mass on zero displacement
_GEOM_RATIO = 0.8      # geometric decay over nonzero magnitudes
_motion_table_cache: list[list[int]] | None = None


def estimate_flow(current, reference, block: int = 8, search: int = 4) -> np.ndarray:
    """Exhaustive per-block integer SAD search, broadcast per pixel.

    Ties are broken toward the smallest |dx|+|dy|, then smallest dy, then dx.
    An empty search window (search=0) yields zero flow.
    """
    cur = as_tensor(current)
    ref = as_tensor(reference)
    if cur.shape != ref.shape:
        raise ShapeError(f"frame shapes differ: {cur.shape} vs {ref.shape}")
    if block < 1:
        raise ShapeError(f"block size must be >= 1, got {block}")
    c, h, w = cur.shape
    ph = (block - h % block) % block
    pw = (block - w % block) % block
    if ph or pw:
        cur = np.pad(cur, ((0, 0), (0, ph), (0, pw)), mode="edge")
        ref = np.pad(ref, ((0, 0), (0, ph), (0, pw)), mode="edge")
    hp, wp = cur.shape[1:]
    nby, nbx = hp // block, wp // block

    candidates = [(dy, dx) for dy in range(-search, search + 1) for dx in range(-search, search + 1)]
    candidates.sort(key=lambda d: (abs(d[0]) + abs(d[1]), d[0], d[1]))

    ref_pad = np.pad(ref, ((0, 0), (search, search), (search, search)), mode="edge")
    cur64 = cur.astype(np.float64)
    best_sad = np.full((nby, nbx), np.inf)
    best_dx = np.zeros((nby, nbx), dtype=np.int64)
    best_dy = np.zeros((nby, nbx), dtype=np.int64)
    for dy, dx in candidates:
        win = ref_pad[:, search + dy : search + dy + hp, search + dx : search + dx + wp]
        diff = np.abs(cur64 - win).sum(axis=0)
        sad = diff.reshape(nby, block, nbx, block).sum(axis=(1, 3))
        better = sad < best_sad  # strict: first candidate in order wins ties
        best_sad = np.where(better, sad, best_sad)
        best_dx = np.where(better, dx, best_dx)
        best_dy = np.where(better, dy, best_dy)

    fx = np.repeat(np.repeat(best_dx, block, axis=0), block, axis=1)
    fy = np.repeat(np.repeat(best_dy, block, axis=0), block, axis=1)
    flow = np.stack([fx, fy]).astype(FLOAT)[:, :h, :w]
    return check_finite(flow, "estimate_flow")


def _motion_tables() -> list[list[int]]:
    global _motion_table_cache
    if _motion_table_cache is None:
        mags = np.arange(1, rc.CLIP + 1, dtype=np.float64)
        tail = _GEOM_RATIO ** mags
        tail = tail / tail.sum() * (1.0 - _ZERO_PROB - 1e-6) / 2.0
        pmf = np.zeros(rc.ALPHABET)
        pmf[rc.ESCAPE] = 1e-6
        pmf[rc.CLIP + 1] = _ZERO_PROB
        for m in range(1, rc.CLIP + 1):
            pmf[rc.CLIP + 1 + m] = tail[m - 1]
            pmf[rc.CLIP + 1 - m] = tail[m - 1]
        _motion_table_cache = [rc.quantize_pmf(pmf)]
    return _motion_table_cache


def _motion_symbol_count(height: int, width: int) -> int:
    return 4 * (height // 2) * (width // 2)


def _reconstruct_motion(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = (q.astype(FLOAT)) / QUARTER_PEL
    up = resample(v, "up2")
    return up[:2], up[2:]


def code_motion(back, fwd, qp: int = 0) -> tuple[bytes, np.ndarray, np.ndarray]:
    """Jointly code both motion fields; returns (payload, back_hat, fwd_hat).

    The quantizer is fixed quarter-pel at half resolution independent of qp;
    decode_motion reproduces the returned reconstructions bit-exactly.
    """
    back = as_tensor(back)
    fwd = as_tensor(fwd)
    if back.shape != fwd.shape or back.shape[0] != 2:
        raise ShapeError(f"motion fields must both be (2, H, W), got {back.shape} / {fwd.shape}")
    h, w = back.shape[1:]
    if h % 2 or w % 2:
        raise ShapeError(f"motion coding requires even dims, got {h}x{w}")
    stacked = np.concatenate([back, fwd], axis=0)
    ds = resample(stacked, "down2")
    q = np.rint(ds * QUARTER_PEL).astype(np.int64)
    payload = rc.encode_symbols(q.ravel(), _motion_tables())
    back_hat, fwd_hat = _reconstruct_motion(q)
    return payload, back_hat, fwd_hat


def decode_motion(payload: bytes, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode a code_motion payload for a (height, width) frame."""
    count = _motion_symbol_count(height, width)
    sym = rc.decode_symbols(payload, count, _motion_tables())
    q = sym.reshape(4, height // 2, width // 2)
    return _reconstruct_motion(q)


def accumulate_flow(first_hop, second_hop, refine=None) -> np.ndarray:
    """Compose two decoded flows into a predicted flow.

    first_hop carries r2->r1 motion, second_hop r1->t; the result predicts
    r2->t as second_hop(p) + first_hop sampled at p + second_hop(p). The
    optional refine stage is a (weight, bias) conv pair, identity by default.
    """
    first_hop = as_tensor(first_hop)
    second_hop = as_tensor(second_hop)
    if first_hop.shape != second_hop.shape or first_hop.shape[0] != 2:
        raise ShapeError(
            f"flow shapes must match as (2, H, W), got {first_hop.shape} / {second_hop.shape}"
        )
    acc = second_hop + warp_bilinear(first_hop, second_hop)
    if refine is not None:
        acc = conv2d(acc, refine[0], bias=refine[1], kind="full")
    return check_finite(acc, "accumulate_flow")


def scale_flow(flow, level: int) -> np.ndarray:
    """Bring a full-resolution flow to scale `level`: pool 2x per level and
    divide magnitudes by 2^level."""
    out = as_tensor(flow)
    for _ in range(level):
        out = resample(out, "down2")
    if level:
        out = out / FLOAT(2**level)
    return out


def format_flow(flow, decimals: int = 1) -> str:
    """Text-grid dump of a flow field (dx, dy per pixel) for debugging."""
    flow = as_tensor(flow)
    lines = []
    for name, ch in (("dx", flow[0]), ("dy", flow[1])):
        lines.append(f"[{name}]")
        for row in ch:
            lines.append(" ".join(f"{v:+.{decimals}f}" for v in row))
    return "\n".join(lines)
