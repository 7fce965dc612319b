import time

import numpy as np
import pytest

from becv import contexts, params as P
from becv.errors import ShapeError
from becv.tensor import warp_bilinear


@pytest.fixture(scope="module")
def seeded():
    return P.generate_seeded(5)


def rand(shape, seed):
    return np.random.default_rng(seed).normal(size=shape).astype(np.float32)


class TestLinearAttention:
    def test_factored_matches_quadratic(self, seeded):
        r = np.random.default_rng(0)
        for i in range(25):
            c = int(r.integers(2, 17))
            h = int(r.integers(2, 17))
            w = int(r.integers(2, 17))
            q, k, v = (r.normal(size=(c, h, w)).astype(np.float32) for _ in range(3))
            fast = contexts.attend_linear(q, k, v)
            slow, _ = contexts.attend_quadratic(q, k, v)
            assert np.abs(fast - slow).max() <= 1e-5, f"instance {i}"

    def test_similarity_rows_sum_to_one(self):
        r = np.random.default_rng(1)
        q, k, v = (r.normal(size=(8, 12, 12)).astype(np.float32) for _ in range(3))
        _, sim = contexts.attend_quadratic(q, k, v)
        np.testing.assert_allclose(sim.sum(axis=1), 1.0, atol=1e-5)

    def test_single_position_returns_value(self):
        r = np.random.default_rng(2)
        q = r.normal(size=(6, 1, 1)).astype(np.float32)
        k = r.normal(size=(6, 1, 1)).astype(np.float32)
        v = r.normal(size=(6, 1, 1)).astype(np.float32)
        out = contexts.attend_linear(q, k, v)
        np.testing.assert_allclose(out, v, atol=1e-6)

    def test_output_within_value_envelope(self):
        r = np.random.default_rng(3)
        q, k, v = (r.normal(size=(5, 9, 9)).astype(np.float32) for _ in range(3))
        out = contexts.attend_linear(q, k, v)
        vf = v.reshape(5, -1)
        lo = vf.min(axis=1)[:, None, None] - 1e-6
        hi = vf.max(axis=1)[:, None, None] + 1e-6
        assert (out >= lo).all() and (out <= hi).all()

    def test_shared_params_identical_references(self, seeded):
        d0 = seeded.config.ctx_channels[0]
        y = rand((seeded.config.enc_channels[0], 8, 8), 4)
        f = rand((d0, 8, 8), 5)
        g1, g2 = contexts.linear_attention(y, [f, f.copy()], seeded, scale=0)
        assert np.abs(g1 - g2).max() <= 1e-6

    def test_encoder_decoder_sides_equal_for_equal_latents(self, seeded):
        cfg = seeded.config
        y = rand((cfg.enc_channels[1], 8, 8), 6)
        kv = {
            "back": contexts.embed_key_value(rand((cfg.ctx_channels[1], 8, 8), 7), seeded, 1),
            "fwd": contexts.embed_key_value(rand((cfg.ctx_channels[1], 8, 8), 8), seeded, 1),
        }
        enc = contexts.extract_nonlocal(y, kv, seeded, 1, ("back", "fwd"))
        dec = contexts.extract_nonlocal(y.copy(), kv, seeded, 1, ("back", "fwd"))
        for slot in enc:
            np.testing.assert_array_equal(enc[slot], dec[slot])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            contexts.attend_linear(
                np.zeros((4, 4, 4), np.float32),
                np.zeros((5, 4, 4), np.float32),
                np.zeros((5, 4, 4), np.float32),
            )

    def test_member_counts_follow_schedule(self, seeded):
        # four scheduled references contribute four non-local members at
        # scale 1 but only the two primaries at scale 0
        cfg = seeded.config
        full = (True, True)
        kv1 = {
            s: contexts.embed_key_value(rand((cfg.ctx_channels[1], 8, 8), i), seeded, 1)
            for i, s in enumerate(contexts.slots_for_scale(full, 1))
        }
        y1 = rand((cfg.enc_channels[1], 8, 8), 20)
        out1 = contexts.extract_nonlocal(y1, kv1, seeded, 1, contexts.slots_for_scale(full, 1))
        assert len(out1) == 4
        kv0 = {
            s: contexts.embed_key_value(rand((cfg.ctx_channels[0], 8, 8), i), seeded, 0)
            for i, s in enumerate(contexts.slots_for_scale(full, 0))
        }
        y0 = rand((cfg.enc_channels[0], 8, 8), 21)
        out0 = contexts.extract_nonlocal(y0, kv0, seeded, 0, contexts.slots_for_scale(full, 0))
        assert len(out0) == 2

    def test_runtime_grows_linearly(self):
        # soft check: time ratio for doubled pixel count should sit near 2,
        # nowhere near the 4x a quadratic formation would cost
        d = 64
        r = np.random.default_rng(9)
        small = [r.normal(size=(d, 96, 96)).astype(np.float32) for _ in range(3)]
        big = [r.normal(size=(d, 96, 192)).astype(np.float32) for _ in range(3)]

        def clock(args):
            best = float("inf")
            for _ in range(3):
                t0 = time.perf_counter()
                contexts.attend_linear(*args)
                best = min(best, time.perf_counter() - t0)
            return best

        ratio = clock(big) / clock(small)
        print(f"attention time ratio for 2x pixels: {ratio:.2f}")
        assert 1.0 < ratio < 3.6


class TestSlots:
    def test_scale0_primaries_only(self):
        assert contexts.slots_for_scale((True, True), 0) == ("back", "fwd")

    def test_extended_slots_at_higher_scales(self):
        assert contexts.slots_for_scale((True, False), 1) == ("back_ext", "back", "fwd")
        assert contexts.slots_for_scale((True, True), 2) == (
            "back_ext", "back", "fwd", "fwd_ext",
        )


class TestExtractLocal:
    def test_zero_motion_identity(self):
        f = rand((4, 8, 8), 10)
        zero = np.zeros((2, 8, 8), np.float32)
        out = contexts.extract_local(
            {"back": f, "fwd": f}, {"back": zero, "fwd": zero}, ("back", "fwd")
        )
        np.testing.assert_array_equal(out["back"], f)
        np.testing.assert_array_equal(out["fwd"], f)

    def test_structural_two_members_without_extensions(self):
        f = rand((4, 8, 8), 11)
        zero = np.zeros((2, 8, 8), np.float32)
        out = contexts.extract_local(
            {"back": f, "fwd": f}, {"back": zero, "fwd": zero},
            contexts.slots_for_scale((False, False), 1),
        )
        assert sorted(out) == ["back", "fwd"]

    def test_missing_feature_hard_error(self):
        f = rand((4, 8, 8), 12)
        zero = np.zeros((2, 8, 8), np.float32)
        with pytest.raises(ShapeError):
            contexts.extract_local({"back": f}, {"back": zero, "fwd": zero}, ("back", "fwd"))

    def test_translation_alignment_beats_unwarped(self):
        # exact-flow warping must cut the gap to the current feature by >= 10x
        r = np.random.default_rng(13)
        big = r.normal(size=(6, 48, 64))
        for _ in range(12):
            big = (
                big
                + np.roll(big, 1, axis=1) + np.roll(big, -1, axis=1)
                + np.roll(big, 1, axis=2) + np.roll(big, -1, axis=2)
            ) / 5.0
        big = big.astype(np.float32)
        cur = big[:, :, 8:40]
        ref = big[:, :, 5:37]  # cur(x) = ref(x + 3): sample 3 px to the right
        flow = np.zeros((2, 48, 32), np.float32)
        flow[0] = 3.0
        warped = contexts.extract_local({"back": ref}, {"back": flow}, ("back",))["back"]
        inner = (slice(None), slice(4, -4), slice(4, -4))
        mse_warped = float(np.mean((warped[inner] - cur[inner]) ** 2))
        mse_raw = float(np.mean((ref[inner] - cur[inner]) ** 2))
        assert mse_warped * 10 <= mse_raw

    def test_warp_consistency_with_tensor_kernel(self):
        f = rand((3, 8, 8), 14)
        flow = rand((2, 8, 8), 15)
        out = contexts.extract_local({"back": f}, {"back": flow}, ("back",))["back"]
        np.testing.assert_array_equal(out, warp_bilinear(f, flow))
