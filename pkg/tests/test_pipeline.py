import numpy as np
import pytest

from becv import params as P
from becv.entropy import SymbolCoder, analyze, effective_step, latent_shape
from becv.errors import CorruptBitstreamError, ProfileError, ShapeError
from becv.gop import build_plan, quality_weight
from becv.pipeline import (
    SequenceJob,
    decode_sequence,
    encode_sequence,
    metrics,
    psnr,
    scan_stream,
)


@pytest.fixture(scope="module")
def seeded():
    return P.generate_seeded(17)


@pytest.fixture(scope="module")
def identity():
    return P.generate_identity()


def noise_frames(n, h, w, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (n, 3, h, w)).astype(np.float32)


def smooth_frames(n, h, w, seed=0, static=False):
    r = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(h + 32), np.arange(w + 32), indexing="ij")
    base = 0.5 + 0.25 * np.sin(2 * np.pi * yy / 36.0) * np.cos(2 * np.pi * xx / 28.0)
    vy = np.clip(np.minimum(yy, h + 31 - yy) / 12.0, 0, 1)
    vx = np.clip(np.minimum(xx, w + 31 - xx) / 12.0, 0, 1)
    big = 0.5 + (base - 0.5) * vy * vx
    out = []
    for t in range(n):
        o = 8 if static else 8 + t
        f = big[8 : 8 + h, o : o + w]
        out.append(np.stack([f, 0.85 * f + 0.05, 1.0 - 0.9 * f]))
    return np.clip(np.stack(out), 0, 1).astype(np.float32)


class TestRoundTrips:
    def test_single_frame_sequence(self, seeded):
        frames = noise_frames(1, 16, 16)
        recon = []
        stream, reports = encode_sequence(
            SequenceJob(frames=frames, intra_period=8, qp=0), seeded, recon_out=recon
        )
        dec = decode_sequence(stream, seeded)
        assert dec.tobytes() == np.stack(recon).tobytes()
        assert len(reports) == 1 and reports[0].kind == "intra"
        assert reports[0].bits_motion == 0

    def test_bit_exact_and_deterministic(self, seeded):
        frames = noise_frames(6, 16, 16, seed=4)
        job = SequenceJob(frames=frames, intra_period=4, qp=3)
        recon = []
        stream, _ = encode_sequence(job, seeded, recon_out=recon)
        assert decode_sequence(stream, seeded).tobytes() == np.stack(recon).tobytes()
        stream2, _ = encode_sequence(job, seeded)
        assert stream == stream2

    def test_intra_period_longer_than_sequence(self, seeded):
        # GOP span 64 with 3 frames: every forward reference proxies to 0
        frames = noise_frames(3, 16, 16, seed=12)
        recon: list = []
        stream, _ = encode_sequence(
            SequenceJob(frames=frames, intra_period=64, qp=2), seeded, recon_out=recon
        )
        assert decode_sequence(stream, seeded).tobytes() == np.stack(recon).tobytes()

    def test_non_multiple_of_16_dims(self, seeded):
        frames = noise_frames(3, 20, 28, seed=5)
        recon = []
        stream, _ = encode_sequence(
            SequenceJob(frames=frames, intra_period=2, qp=1), seeded, recon_out=recon
        )
        dec = decode_sequence(stream, seeded)
        assert dec.shape == frames.shape
        assert dec.tobytes() == np.stack(recon).tobytes()

    def test_static_sequence_b_frames_cheaper_than_intra(self, identity):
        frames = smooth_frames(9, 32, 32, static=True)
        stream, reports = encode_sequence(
            SequenceJob(frames=frames, intra_period=8, qp=2), identity
        )
        intra_latent = reports[0].bits_latent
        for rep in reports:
            if rep.kind == "bidirectional":
                assert rep.bits_latent < intra_latent

    def test_reconstruction_independent_of_later_frames(self, seeded):
        frames = noise_frames(9, 16, 16, seed=6)
        altered = frames.copy()
        altered[7] = noise_frames(1, 16, 16, seed=99)[0]  # frame 7 is coded last
        rec_a: list = []
        rec_b: list = []
        encode_sequence(SequenceJob(frames=frames, intra_period=8, qp=1), seeded,
                        recon_out=rec_a)
        encode_sequence(SequenceJob(frames=altered, intra_period=8, qp=1), seeded,
                        recon_out=rec_b)
        plan = build_plan(8, 9)
        assert plan.coding_order[-1] == 7
        for t in range(9):
            if t != 7:
                assert rec_a[t].tobytes() == rec_b[t].tobytes(), f"frame {t} changed"

    def test_ip8_frame3_context_sources(self, seeded):
        plan = build_plan(8, 9)
        assert plan.schedule(3).reference_set() == (0, 2, 4, 8)


class TestValidation:
    def test_bad_shape_rejected(self, seeded):
        with pytest.raises(ShapeError):
            encode_sequence(
                SequenceJob(frames=np.zeros((2, 1, 16, 16), np.float32), intra_period=2, qp=0),
                seeded,
            )

    def test_out_of_range_values_rejected(self, seeded):
        frames = np.full((2, 3, 16, 16), 1.5, np.float32)
        with pytest.raises(ShapeError):
            encode_sequence(SequenceJob(frames=frames, intra_period=2, qp=0), seeded)

    def test_bad_qp_rejected(self, seeded):
        with pytest.raises(ShapeError):
            encode_sequence(
                SequenceJob(frames=noise_frames(2, 16, 16), intra_period=2, qp=7), seeded
            )

    def test_wrong_profile_rejected(self, seeded, identity):
        stream, _ = encode_sequence(
            SequenceJob(frames=noise_frames(2, 16, 16), intra_period=2, qp=0), seeded
        )
        with pytest.raises(ProfileError):
            decode_sequence(stream, identity)

    def test_truncated_stream_names_position(self, seeded):
        stream, _ = encode_sequence(
            SequenceJob(frames=noise_frames(5, 16, 16, seed=8), intra_period=4, qp=1), seeded
        )
        with pytest.raises(CorruptBitstreamError, match="coding position"):
            decode_sequence(stream[: len(stream) - 40], seeded)

    def test_garbage_magic_rejected(self, seeded):
        with pytest.raises(CorruptBitstreamError):
            decode_sequence(b"JUNKJUNKJUNKJUNKJUNK", seeded)

    def test_wrong_kind_byte_detected(self, seeded):
        frames = noise_frames(3, 16, 16, seed=9)
        stream, _ = encode_sequence(SequenceJob(frames=frames, intra_period=2, qp=0), seeded)
        header_len = 15
        corrupted = bytearray(stream)
        corrupted[header_len] ^= 1  # flip the first chunk's kind byte
        with pytest.raises(CorruptBitstreamError, match="kind"):
            decode_sequence(bytes(corrupted), seeded)


class TestMetrics:
    def test_identical_frames_capped_psnr(self):
        f = noise_frames(2, 8, 8)
        assert psnr(f[0], f[0]) == 99.0

    def test_uniform_half_difference(self):
        a = np.zeros((3, 8, 8), np.float32)
        b = np.full((3, 8, 8), 0.5, np.float32)
        assert psnr(a, b) == pytest.approx(6.0206, abs=1e-4)

    def test_layer_averages_match_reports(self, seeded):
        frames = noise_frames(5, 16, 16, seed=10)
        recon: list = []
        stream, reports = encode_sequence(
            SequenceJob(frames=frames, intra_period=4, qp=2), seeded, recon_out=recon
        )
        summary = metrics(frames, np.stack(recon), reports)
        for layer in summary.layer_bits:
            got = [r.bits_total for r in reports if r.layer == layer]
            assert summary.layer_bits[layer] == pytest.approx(np.mean(got))
        total = sum(r.bits_total for r in reports)
        assert summary.total_bits == total
        assert summary.bpp == pytest.approx(total / (5 * 16 * 16))

    def test_bits_match_chunk_lengths(self, seeded):
        frames = noise_frames(5, 16, 16, seed=11)
        stream, reports = encode_sequence(
            SequenceJob(frames=frames, intra_period=4, qp=2), seeded
        )
        header, scanned = scan_stream(stream)
        assert header.frame_count == 5
        for got, want in zip(scanned, reports):
            assert (got.bits_motion, got.bits_latent) == (want.bits_motion, want.bits_latent)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            metrics(noise_frames(2, 8, 8), noise_frames(2, 8, 10))


class TestBoundaryProxy:
    @pytest.mark.parametrize("n", [9, 10, 12, 13])
    def test_partial_gop_bit_exact(self, seeded, n):
        frames = noise_frames(n, 16, 16, seed=20 + n)
        recon: list = []
        stream, _ = encode_sequence(
            SequenceJob(frames=frames, intra_period=8, qp=1), seeded, recon_out=recon
        )
        dec = decode_sequence(stream, seeded)
        assert dec.tobytes() == np.stack(recon).tobytes()


class TestHierarchicalAllocation:
    def test_ip16_layer_bits_non_increasing(self, identity):
        frames = smooth_frames(17, 32, 32)

        def hook(t, ref, shape):
            flow = np.zeros((2,) + shape, np.float32)
            flow[0] = float(ref - t)
            return flow

        _, reports = encode_sequence(
            SequenceJob(frames=frames, intra_period=16, qp=2, flow_hook=hook), identity
        )
        per_layer: dict[int, list[int]] = {}
        for rep in reports:
            if rep.kind == "bidirectional":
                per_layer.setdefault(rep.layer, []).append(rep.bits_total)
        assert sorted(per_layer) == [1, 2, 3, 4]
        means = [np.mean(per_layer[k]) for k in sorted(per_layer)]
        assert all(a >= b for a, b in zip(means, means[1:])), means


class TestConditionalBenefit:
    def test_translation_sequence_b_latents_much_cheaper(self, identity):
        frames = smooth_frames(9, 48, 48)

        def hook(t, ref, shape):
            flow = np.zeros((2,) + shape, np.float32)
            flow[0] = float(ref - t)
            return flow

        stream, reports = encode_sequence(
            SequenceJob(frames=frames, intra_period=8, qp=2, flow_hook=hook), identity
        )
        sc = SymbolCoder(identity.config)
        plan = build_plan(8, 9)
        for rep in reports:
            if rep.kind != "bidirectional":
                continue
            step = effective_step(identity.config, 2, quality_weight(plan, rep.t))
            y, _ = analyze(frames[rep.t], identity, None, intra=True)
            model = sc.model_intra(latent_shape(identity.config, 48, 48), step)
            intra_bits = 8 * len(sc.encode(sc.quantize_symbols(y, step, model), model))
            assert rep.bits_latent <= 0.8 * intra_bits, (
                f"frame {rep.t}: {rep.bits_latent} vs intra {intra_bits}"
            )
