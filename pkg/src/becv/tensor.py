"""Dense tensor kernels shared by every stage of the codec.

All tensors are numpy float32 arrays shaped (channels, height, width).
Every kernel is a pure function, raises on shape mismatch, and checks its
output for non-finite values so numerical blowups fail early instead of
corrupting a bitstream three modules later.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, ShapeError

FLOAT = np.float32

# Largest float32 strictly below 1, and a tiny positive floor: the sigmoid
# output must stay strictly inside (0, 1) even where float32 would saturate.
_SIG_HI = np.float32(1.0) - np.float32(2.0) ** -24
_SIG_LO = np.float32(2.0) ** -100

LEAKY_SLOPE = 0.01


def as_tensor(x) -> np.ndarray:
    t = np.asarray(x, dtype=FLOAT)
    if t.ndim != 3:
        raise ShapeError(f"expected (C, H, W) tensor, got shape {t.shape}")
    return t


def check_finite(x: np.ndarray, where: str = "kernel") -> np.ndarray:
    if not np.isfinite(x).all():
        raise NumericalError(f"non-finite values produced by {where}")
    return x


def _pad2d(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw)))


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (C, Ho, Wo, kh, kw) strided view over a padded input
    c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    s0, s1, s2 = x.strides
    return np.lib.stride_tricks.as_strided(
        x, (c, ho, wo, kh, kw), (s0, s1 * stride, s2 * stride, s1, s2)
    )


def conv2d(x, weight, bias=None, stride: int = 1, kind: str = "full") -> np.ndarray:
    """2D convolution with zero 'same' padding (stride 1) or exact halving (stride 2).

    kind selects the weight layout: full (Co, Ci, kh, kw), pointwise (Co, Ci),
    depthwise (C, kh, kw).
    """
    x = as_tensor(x)
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")
    w = np.asarray(weight, dtype=FLOAT)

    # Accumulate in float64 so the kernel stays within 1e-6 of the direct
    # 6-loop reference regardless of accumulation order; results are cast
    # back to float32 at the end.
    if kind == "pointwise":
        if w.ndim != 2 or w.shape[1] != x.shape[0]:
            raise ShapeError(
                f"pointwise weight {w.shape} does not match input channels {x.shape[0]}"
            )
        src = x[:, ::stride, ::stride] if stride == 2 else x
        out = np.tensordot(w.astype(np.float64), src.astype(np.float64), axes=([1], [0]))
    elif kind == "depthwise":
        if w.ndim != 3 or w.shape[0] != x.shape[0]:
            raise ShapeError(
                f"depthwise weight {w.shape} does not match input channels {x.shape[0]}"
            )
        kh, kw = w.shape[1:]
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        if stride == 1 and (kh % 2 == 0 or kw % 2 == 0):
            raise ShapeError("stride-1 convolution requires odd kernel size")
        win = _windows(_pad2d(x.astype(np.float64), ph, pw), kh, kw, stride)
        out = np.einsum("chwij,cij->chw", win, w.astype(np.float64))
    elif kind == "full":
        if w.ndim != 4 or w.shape[1] != x.shape[0]:
            raise ShapeError(
                f"conv weight {w.shape} does not match input channels {x.shape[0]}"
            )
        co, ci, kh, kw = w.shape
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        if stride == 1 and (kh % 2 == 0 or kw % 2 == 0):
            raise ShapeError("stride-1 convolution requires odd kernel size")
        win = _windows(_pad2d(x.astype(np.float64), ph, pw), kh, kw, stride)
        _, ho, wo, _, _ = win.shape
        cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, ci * kh * kw)
        out = (cols @ w.reshape(co, -1).T.astype(np.float64)).T.reshape(co, ho, wo)
    else:
        raise ShapeError(f"unknown conv kind {kind!r}")

    if bias is not None:
        b = np.asarray(bias, dtype=FLOAT)
        if b.shape != (out.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match {out.shape[0]} outputs")
        out = out + b.astype(np.float64)[:, None, None]
    return check_finite(np.ascontiguousarray(out, dtype=FLOAT), "conv2d")


def softmax_rows(m, axis: str = "rows") -> np.ndarray:
    """Numerically stabilized softmax along rows or columns of a 2D array."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {m.shape}")
    ax = 1 if axis == "rows" else 0
    z = m.astype(np.float64)
    z = z - z.max(axis=ax, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=ax, keepdims=True)
    return check_finite(out.astype(m.dtype, copy=False), "softmax_rows")


def warp_bilinear(feature, flow) -> np.ndarray:
    """Backward warp: out(p) = feature sampled at p + flow(p), border clamped.

    flow is (2, H, W) with channel 0 = dx (width axis), channel 1 = dy.
    Uses lerp form so constant inputs and integer flows reproduce exactly.
    """
    feature = as_tensor(feature)
    flow = as_tensor(flow)
    c, h, w = feature.shape
    if flow.shape != (2, h, w):
        raise ShapeError(f"flow shape {flow.shape} does not match feature {feature.shape}")

    yy, xx = np.meshgrid(np.arange(h, dtype=FLOAT), np.arange(w, dtype=FLOAT), indexing="ij")
    px = np.clip(xx + flow[0], 0.0, w - 1.0)
    py = np.clip(yy + flow[1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(px).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(py).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (px - x0).astype(FLOAT)
    fy = (py - y0).astype(FLOAT)

    f00 = feature[:, y0, x0]
    f01 = feature[:, y0, x1]
    f10 = feature[:, y1, x0]
    f11 = feature[:, y1, x1]
    top = f00 + fx * (f01 - f00)
    bot = f10 + fx * (f11 - f10)
    out = top + fy * (bot - top)
    return check_finite(out.astype(FLOAT, copy=False), "warp_bilinear")


def resample(t, factor: str) -> np.ndarray:
    """down2 = 2x2 average pooling (even dims required); up2 = bilinear x2."""
    t = as_tensor(t)
    c, h, w = t.shape
    if factor == "down2":
        if h % 2 or w % 2:
            raise ShapeError(f"down2 requires even dims, got {h}x{w}")
        out = t.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    elif factor == "up2":
        out = _up2_axis(_up2_axis(t, axis=1), axis=2)
    else:
        raise ShapeError(f"unknown resample factor {factor!r}")
    return check_finite(out.astype(FLOAT, copy=False), "resample")


def _up2_axis(t: np.ndarray, axis: int) -> np.ndarray:
    # Bilinear x2 along one axis: output i samples input at (i + 0.5)/2 - 0.5,
    # clamped at both ends (standard half-pixel-centres convention).
    n = t.shape[axis]
    pos = (np.arange(2 * n, dtype=np.float64) + 0.5) / 2.0 - 0.5
    pos = np.clip(pos, 0.0, n - 1.0)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    f = (pos - i0).astype(FLOAT)
    a = np.take(t, i0, axis=axis)
    b = np.take(t, i1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = 2 * n
    f = f.reshape(shape)
    return a + f * (b - a)


def activate(t, kind: str) -> np.ndarray:
    t = np.asarray(t, dtype=FLOAT)
    if kind == "sigmoid":
        z = t.astype(np.float64)
        e = np.exp(-np.abs(z))  # never overflows
        out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        out = np.clip(out.astype(FLOAT), _SIG_LO, _SIG_HI)
    elif kind == "leaky_relu":
        out = np.where(t >= 0, t, FLOAT(LEAKY_SLOPE) * t)
    else:
        raise ShapeError(f"unknown activation {kind!r}")
    return check_finite(out.astype(FLOAT, copy=False), f"activate:{kind}")


def sigmoid(t) -> np.ndarray:
    return activate(t, "sigmoid")


def leaky_relu(t) -> np.ndarray:
    return activate(t, "leaky_relu")


def space_to_depth(x) -> np.ndarray:
    """(C, H, W) -> (4C, H/2, W/2); channel layout (c, dy, dx)."""
    x = as_tensor(x)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"space_to_depth requires even dims, got {h}x{w}")
    return np.ascontiguousarray(
        x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 2, 4, 1, 3).reshape(4 * c, h // 2, w // 2)
    )


def depth_to_space(x) -> np.ndarray:
    """(4C, H, W) -> (C, 2H, 2W); inverse of space_to_depth."""
    x = as_tensor(x)
    c4, h, w = x.shape
    if c4 % 4:
        raise ShapeError(f"depth_to_space requires channels divisible by 4, got {c4}")
    c = c4 // 4
    return np.ascontiguousarray(
        x.reshape(c, 2, 2, h, w).transpose(0, 3, 1, 4, 2).reshape(c, 2 * h, 2 * w)
    )


def conv2d_naive(x, weight, bias=None, stride: int = 1) -> np.ndarray:
    """Direct 6-loop full convolution; the reference oracle for conv2d."""
    x = as_tensor(x)
    w = np.asarray(weight, dtype=FLOAT)
    co, ci, kh, kw = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = _pad2d(x, ph, pw).astype(np.float64)
    _, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.zeros((co, ho, wo), dtype=np.float64)
    for o in range(co):
        for c in range(ci):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for a in range(kh):
                        for b in range(kw):
                            acc += float(w[o, c, a, b]) * xp[c, i * stride + a, j * stride + b]
                    out[o, i, j] += acc
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[:, None, None]
    return out.astype(FLOAT)
