import numpy as np
import pytest

from becv import params as P


@pytest.fixture(scope="session")
def seeded_params():
    return P.generate_seeded(2024)


@pytest.fixture(scope="session")
def identity_params():
    return P.generate_identity()


def make_translating(n, h, w, speed=(1, 0), amplitude=0.25, border=12):
    """Smooth pattern translating at `speed` px/frame with a calm border band,
    so clamped warping stays predictable near the edges."""
    margin = 4 + n * max(abs(speed[0]), abs(speed[1]))
    hh, ww = h + 2 * margin, w + 2 * margin
    yy, xx = np.meshgrid(np.arange(hh), np.arange(ww), indexing="ij")
    base = 0.5 + amplitude * np.sin(2 * np.pi * yy / 48.0) * np.cos(2 * np.pi * xx / 40.0)
    base += 0.08 * np.sin(2 * np.pi * (yy + xx) / 64.0)
    vy = np.clip(np.minimum(yy, hh - 1 - yy) / border, 0, 1)
    vx = np.clip(np.minimum(xx, ww - 1 - xx) / border, 0, 1)
    big = 0.5 + (base - 0.5) * vy * vx
    frames = []
    for t in range(n):
        oy = margin + speed[1] * t
        ox = margin + speed[0] * t
        f = big[oy : oy + h, ox : ox + w]
        frames.append(np.stack([f, 0.85 * f + 0.05, 1.0 - 0.9 * f]))
    return np.clip(np.stack(frames), 0.0, 1.0).astype(np.float32)


def translation_hook(speed=(1, 0)):
    """Exact-motion injection for make_translating sequences."""

    def hook(t, ref, shape):
        flow = np.zeros((2,) + tuple(shape), np.float32)
        flow[0] = speed[0] * float(ref - t)
        flow[1] = speed[1] * float(ref - t)
        return flow

    return hook
