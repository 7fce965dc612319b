"""Per-sequence encoding and decoding over the hierarchical plan.

The encoder is closed-loop: after producing each frame's chunks it runs the
same decode routine the decoder runs, on the same payloads, so propagated
features and reconstructions cannot drift — bit-exactness holds by
construction, and the acceptance suite verifies it byte for byte.

Frames enter as (N, 3, H, W) float32 in [0, 1]; dims are padded to
multiples of 16 internally (edge replication) and cropped on output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import bitstream as bs
from .cache import CacheKey, FeatureCache, ReferenceEntry, ReferenceStore, cache_use_counts
from .contexts import ContextSet, embed_key_value, extract_local, extract_nonlocal, slots_for_scale
from .entropy import SymbolCoder, analyze, effective_step, latent_shape, synthesize
from .errors import CorruptBitstreamError, ProfileError, ShapeError
from .gating import feature_generation, gate, prior_gate
from .gop import GopPlan, build_plan, quality_weight
from .motion import accumulate_flow, code_motion, decode_motion, estimate_flow, scale_flow
from .params import ParamSet
from .tensor import FLOAT, conv2d, resample


@dataclass
class SequenceJob:
    frames: np.ndarray          # (N, 3, H, W) float32 in [0, 1]
    intra_period: int
    qp: int
    cache_enabled: bool = True
    # optional exact-motion injection: (t, ref_index, (H, W) padded) -> flow or None
    flow_hook: object = None


@dataclass
class FrameReport:
    t: int
    kind: str
    layer: int
    bits_motion: int
    bits_latent: int
    psnr: float

    @property
    def bits_total(self) -> int:
        return self.bits_motion + self.bits_latent


@dataclass
class _Bundle:
    sched: object
    mask: tuple[bool, bool]
    sources: dict[str, int]
    locals_by_scale: dict[int, dict[str, np.ndarray]]


def _pad16(frames: np.ndarray) -> np.ndarray:
    h, w = frames.shape[2:]
    ph = (-h) % 16 if h >= 16 else 16 - h
    pw = (-w) % 16 if w >= 16 else 16 - w
    if ph == 0 and pw == 0:
        return frames
    return np.pad(frames, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")


class _Coder:
    """One side of the codec: reference state, caches, and frame decoding."""

    def __init__(self, plan: GopPlan, params: ParamSet, qp: int, padded_hw, cache_enabled, side,
                 tap=None):
        self.plan = plan
        self.params = params
        self.qp = qp
        self.ph, self.pw = padded_hw
        self.refs = ReferenceStore.for_plan(plan)
        self.cache = FeatureCache(cache_use_counts(plan, side), enabled=cache_enabled)
        self.symbols = SymbolCoder(params.config)
        self.side = side
        self.tap = tap

    def step_for(self, t: int) -> float:
        return effective_step(self.params.config, self.qp, quality_weight(self.plan, t))

    def feature(self, r: int, scale: int) -> np.ndarray:
        if scale == 0:
            return self.refs.get(r, 0).feature
        key = CacheKey(r, "feature", scale, self.side)

        def produce():
            pooled = resample(self.feature(r, scale - 1), "down2")
            return conv2d(pooled, *self.params.conv(f"feat_down{scale}"), kind="pointwise")

        return self.cache.fetch(key, produce)

    def key_value(self, r: int, scale: int) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        k = self.cache.fetch(
            CacheKey(r, "key", scale, self.side),
            lambda: embed_key_value(self.feature(r, scale), p, scale)[0],
        )
        v = self.cache.fetch(
            CacheKey(r, "value", scale, self.side),
            lambda: embed_key_value(self.feature(r, scale), p, scale)[1],
        )
        return k, v

    def bundle(self, t: int, flow_back: np.ndarray, flow_fwd: np.ndarray) -> _Bundle:
        """Decoder-reproducible reference data for coding frame t: resolved
        sources, accumulated flows, and warped local contexts per scale."""
        sched = self.plan.schedule(t)
        mask = (sched.ext_back is not None, sched.ext_fwd is not None)
        sources = {"back": sched.ref_back, "fwd": sched.ref_fwd}
        flows0 = {"back": flow_back, "fwd": flow_fwd}
        refine = self.params.conv("acc_refine")
        if mask[0]:
            sources["back_ext"] = sched.ext_back
            first_hop = self.refs.get(sched.ref_back).flow_back
            flows0["back_ext"] = accumulate_flow(first_hop, flow_back, refine)
        if mask[1]:
            sources["fwd_ext"] = sched.ext_fwd
            first_hop = self.refs.get(sched.ref_fwd).flow_fwd
            flows0["fwd_ext"] = accumulate_flow(first_hop, flow_fwd, refine)
        locals_by_scale = {}
        for scale in range(3):
            slots = slots_for_scale(mask, scale)
            feats = {s: self.feature(sources[s], scale) for s in slots}
            flows = {s: scale_flow(flows0[s], scale) for s in slots}
            locals_by_scale[scale] = extract_local(feats, flows, slots)
        return _Bundle(sched=sched, mask=mask, sources=sources, locals_by_scale=locals_by_scale)

    def _nonlocal(self, b: _Bundle, scale: int, query_src: np.ndarray, tap_t=None):
        slots = slots_for_scale(b.mask, scale)
        kv = {s: self.key_value(b.sources[s], scale) for s in slots}
        g = extract_nonlocal(query_src, kv, self.params, scale, slots)
        if tap_t is not None and self.tap is not None:
            self.tap("attention", tap_t, scale,
                     {"query_src": query_src, "kv": kv, "sources": dict(b.sources)})
        return g

    def ctx_fn(self, b: _Bundle, t: int, tapped: bool):
        def fn(scale: int, latent: np.ndarray) -> np.ndarray:
            contexts = ContextSet(
                scale=scale,
                side="decoder" if tapped else "encoder",
                sources={s: b.sources[s] for s in slots_for_scale(b.mask, scale)},
                local=b.locals_by_scale[scale],
                nonlocal_=self._nonlocal(b, scale, latent, t if tapped else None),
            )
            c, m = gate(latent, contexts, self.params)
            if tapped and self.tap is not None:
                self.tap("gate", t, scale, m)
            return c
        return fn

    def frame_model(self, b: _Bundle, step: float):
        prior = prior_gate(b.locals_by_scale[2], self.params, b.mask)
        return self.symbols.model_from_prior(prior, step, self.params)

    def decode_frame(self, t: int, kind: int, motion_payload: bytes, latent_payload: bytes,
                     pos: int) -> np.ndarray:
        """The decoder path for one frame; the encoder runs it too (closed loop)."""
        sched = self.plan.schedule(t)
        expected = bs.KIND_INTRA if sched.is_intra else bs.KIND_BIDIR
        if kind != expected:
            raise CorruptBitstreamError(
                f"frame {t} (coding position {pos}): chunk kind {kind} does not match the plan"
            )
        step = self.step_for(t)
        try:
            if sched.is_intra:
                model = self.symbols.model_intra(
                    latent_shape(self.params.config, self.ph, self.pw), step
                )
                sym = self.symbols.decode(latent_payload, model)
                latent = self.symbols.reconstruct(sym, step, model)
                y0, _ = synthesize(latent, self.params, None, intra=True)
                feat, recon = feature_generation(y0, None, self.params)
                flow_back = flow_fwd = None
            else:
                flow_back, flow_fwd = decode_motion(motion_payload, self.ph, self.pw)
                b = self.bundle(t, flow_back, flow_fwd)
                model = self.frame_model(b, step)
                sym = self.symbols.decode(latent_payload, model)
                latent = self.symbols.reconstruct(sym, step, model)
                y0, c0 = synthesize(
                    latent, self.params, self.ctx_fn(b, t, tapped=True), intra=False
                )
                feat, recon = feature_generation(y0, c0, self.params)
        except CorruptBitstreamError as exc:
            raise CorruptBitstreamError(f"frame {t} (coding position {pos}): {exc}") from exc
        self.refs.put(t, ReferenceEntry(feat, recon, flow_back, flow_fwd))
        self.refs.release(sched.reference_set())
        return recon


def _validate_job(job: SequenceJob) -> np.ndarray:
    frames = np.asarray(job.frames, dtype=FLOAT)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ShapeError(f"frames must be (N, 3, H, W), got {frames.shape}")
    if frames.shape[0] < 1:
        raise ShapeError("need at least one frame")
    if float(frames.min()) < 0.0 or float(frames.max()) > 1.0:
        raise ShapeError("frame values must lie in [0, 1]")
    if not 0 <= job.qp <= 3:
        raise ShapeError(f"qp must be in 0..3, got {job.qp}")
    return frames


def encode_sequence(job: SequenceJob, params: ParamSet, tap=None, stats_out: dict | None = None,
                    recon_out: list | None = None):
    """Encode a sequence; returns (bitstream bytes, FrameReports in display order).

    When stats_out is given it receives the encoder cache statistics and
    wall time under keys "cache" and "seconds"; recon_out, when given, is
    filled with the encoder-internal reconstructions in display order
    (cropped), which the decoder must reproduce byte for byte.
    """
    started = time.perf_counter()
    frames = _validate_job(job)
    n, _, h, w = frames.shape
    padded = _pad16(frames)
    ph, pw = padded.shape[2:]
    cfg = params.config
    plan = build_plan(job.intra_period, n, cfg.quality_weights)
    coder = _Coder(plan, params, job.qp, (ph, pw), job.cache_enabled, "encoder", tap)

    chunks: list[bytes] = []
    reports: dict[int, FrameReport] = {}
    recons: dict[int, np.ndarray] = {}
    for pos, t in enumerate(plan.coding_order):
        sched = plan.schedule(t)
        step = coder.step_for(t)
        x = padded[t]
        if sched.is_intra:
            y, _ = analyze(x, params, None, intra=True)
            model = coder.symbols.model_intra(latent_shape(cfg, ph, pw), step)
            sym = coder.symbols.quantize_symbols(y, step, model)
            latent_payload = coder.symbols.encode(sym, model)
            motion_payload = b""
            kind = bs.KIND_INTRA
        else:
            vb = vf = None
            if job.flow_hook is not None:
                vb = job.flow_hook(t, sched.ref_back, (ph, pw))
                vf = job.flow_hook(t, sched.ref_fwd, (ph, pw))
            if vb is None:
                vb = estimate_flow(x, coder.refs.get(sched.ref_back).recon,
                                   cfg.motion_block, cfg.motion_search)
            if vf is None:
                vf = estimate_flow(x, coder.refs.get(sched.ref_fwd).recon,
                                   cfg.motion_block, cfg.motion_search)
            motion_payload, vbh, vfh = code_motion(vb, vf, job.qp)
            b = coder.bundle(t, vbh, vfh)
            model = coder.frame_model(b, step)
            y, _ = analyze(x, params, coder.ctx_fn(b, t, tapped=False), intra=False)
            sym = coder.symbols.quantize_symbols(y, step, model)
            latent_payload = coder.symbols.encode(sym, model)
            kind = bs.KIND_BIDIR
        # closed loop: reconstruct through the decoder path on the actual payloads
        recon = coder.decode_frame(t, kind, motion_payload, latent_payload, pos)
        if recon_out is not None:
            recons[t] = recon[:, :h, :w].copy()
        chunks.append(bs.pack_chunk(kind, motion_payload, latent_payload))
        reports[t] = FrameReport(
            t=t,
            kind=sched.kind,
            layer=sched.layer,
            bits_motion=8 * len(motion_payload),
            bits_latent=8 * len(latent_payload),
            psnr=psnr(frames[t], recon[:, :h, :w]),
        )

    header = bs.pack_header(
        bs.StreamHeader(
            width=w, height=h, frame_count=n, intra_period=job.intra_period,
            qp=job.qp, profile_id=params.profile_id,
        )
    )
    stream = header + b"".join(chunks)
    if stats_out is not None:
        stats_out["cache"] = coder.cache.stats
        stats_out["cache_live"] = coder.cache.live_entries
        stats_out["seconds"] = time.perf_counter() - started
    if recon_out is not None:
        recon_out.extend(recons[t] for t in range(n))
    return stream, [reports[t] for t in range(n)]


def decode_sequence(data: bytes, params: ParamSet, cache_enabled: bool = True, tap=None,
                    stats_out: dict | None = None):
    """Decode a bitstream to (N, 3, H, W) float32 frames in display order."""
    started = time.perf_counter()
    header, offset = bs.unpack_header(data)
    if header.profile_id != params.profile_id:
        raise ProfileError(
            f"stream was coded with profile id {header.profile_id}, "
            f"parameter file carries {params.profile_id}"
        )
    if not 0 <= header.qp <= 3:
        raise CorruptBitstreamError(f"header qp {header.qp} out of range")
    cfg = params.config
    plan = build_plan(header.intra_period, header.frame_count, cfg.quality_weights)
    ph = max(16, header.height + ((-header.height) % 16))
    pw = max(16, header.width + ((-header.width) % 16))
    coder = _Coder(plan, params, header.qp, (ph, pw), cache_enabled, "decoder", tap)
    reader = bs.ChunkReader(data, offset)

    out = np.empty((header.frame_count, 3, header.height, header.width), dtype=FLOAT)
    for pos, t in enumerate(plan.coding_order):
        kind, motion_payload, latent_payload = reader.next_chunk()
        recon = coder.decode_frame(t, kind, motion_payload, latent_payload, pos)
        out[t] = recon[:, : header.height, : header.width]
    reader.finish()
    if stats_out is not None:
        stats_out["cache"] = coder.cache.stats
        stats_out["cache_live"] = coder.cache.live_entries
        stats_out["seconds"] = time.perf_counter() - started
    return out


def scan_stream(data: bytes):
    """Read header and per-frame chunk sizes without decoding any payload.

    Returns (StreamHeader, FrameReports in display order with psnr unset);
    used by the metrics CLI to recover rate allocation from a bitstream.
    """
    header, offset = bs.unpack_header(data)
    plan = build_plan(header.intra_period, header.frame_count)
    reader = bs.ChunkReader(data, offset)
    reports: dict[int, FrameReport] = {}
    for t in plan.coding_order:
        kind, motion_payload, latent_payload = reader.next_chunk()
        sched = plan.schedule(t)
        reports[t] = FrameReport(
            t=t,
            kind=sched.kind,
            layer=sched.layer,
            bits_motion=8 * len(motion_payload),
            bits_latent=8 * len(latent_payload),
            psnr=float("nan"),
        )
    reader.finish()
    return header, [reports[t] for t in range(header.frame_count)]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB on [0,1] RGB, capped at 99 for (near-)zero error."""
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse <= 0.0:
        return 99.0
    return min(10.0 * np.log10(1.0 / mse), 99.0)


@dataclass
class MetricsSummary:
    frame_psnr: list[float]
    mean_psnr: float
    total_bits: int
    bpp: float
    layer_bits: dict[int, float] = field(default_factory=dict)
    layer_psnr: dict[int, float] = field(default_factory=dict)

    def format(self) -> str:
        lines = [
            f"frames: {len(self.frame_psnr)}",
            f"mean psnr: {self.mean_psnr:.3f} dB",
            f"total bits: {self.total_bits}  bpp: {self.bpp:.5f}",
        ]
        for k in sorted(self.layer_bits):
            lines.append(
                f"layer {k}: mean bits {self.layer_bits[k]:.1f}"
                + (f", mean psnr {self.layer_psnr[k]:.3f} dB" if k in self.layer_psnr else "")
            )
        return "\n".join(lines)


def metrics(original: np.ndarray, reconstructed: np.ndarray,
            reports: list[FrameReport] | None = None) -> MetricsSummary:
    """Per-frame PSNR plus rate bookkeeping from the encoder reports."""
    original = np.asarray(original, dtype=FLOAT)
    reconstructed = np.asarray(reconstructed, dtype=FLOAT)
    if original.shape != reconstructed.shape:
        raise ShapeError(
            f"original {original.shape} and reconstruction {reconstructed.shape} differ"
        )
    per_frame = [psnr(original[i], reconstructed[i]) for i in range(original.shape[0])]
    total_bits = 0
    layer_bits: dict[int, list[int]] = {}
    layer_psnr: dict[int, list[float]] = {}
    if reports:
        if len(reports) != original.shape[0]:
            raise ShapeError("report count does not match frame count")
        for rep in reports:
            total_bits += rep.bits_total
            layer_bits.setdefault(rep.layer, []).append(rep.bits_total)
            layer_psnr.setdefault(rep.layer, []).append(per_frame[rep.t])
    n, _, h, w = original.shape
    return MetricsSummary(
        frame_psnr=per_frame,
        mean_psnr=float(np.mean(per_frame)),
        total_bits=total_bits,
        bpp=total_bits / float(n * h * w) if total_bits else 0.0,
        layer_bits={k: float(np.mean(v)) for k, v in layer_bits.items()},
        layer_psnr={k: float(np.mean(v)) for k, v in layer_psnr.items()},
    )
