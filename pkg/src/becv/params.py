"""Parameter profiles: configuration plus every module weight.

Two profiles ship with the codec. The seeded profile draws every tensor
from a named, seed-keyed RNG stream so parameter files regenerate
bit-identically. The identity profile wires the transform ladders as exact
space-to-depth / depth-to-space stacks (lossless without quantization) and
points the entropy head at the warped reference content, which is what the
rate sanity tests run on.

Gate weights are generated per reference layout (which extended slots are
present) so each layout gets correctly normalized weights instead of
slicing a fixed tensor.
"""

from __future__ import annotations

import io
import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ProfileError
from .tensor import FLOAT

PARAMS_VERSION = 1

SLOT_ORDER = ("back_ext", "back", "fwd", "fwd_ext")
# layout mask = (has back_ext, has fwd_ext); scale 0 always uses (False, False)
LAYOUTS = ((False, False), (False, True), (True, False), (True, True))


def layout_tag(mask: tuple[bool, bool]) -> str:
    return f"{int(mask[0])}{int(mask[1])}"


def layout_slots(mask: tuple[bool, bool]) -> tuple[str, ...]:
    slots = []
    if mask[0]:
        slots.append("back_ext")
    slots.append("back")
    slots.append("fwd")
    if mask[1]:
        slots.append("fwd_ext")
    return tuple(slots)


@dataclass(frozen=True)
class CodecConfig:
    enc_channels: tuple[int, int, int, int] = (32, 48, 64, 96)
    ctx_channels: tuple[int, int, int] = (32, 48, 64)
    motion_block: int = 8
    motion_search: int = 4
    base_steps: tuple[float, float, float, float] = (1.0, 0.6, 0.35, 0.2)
    quality_weights: tuple[float, ...] = (1.4, 1.4, 0.7, 0.5, 0.5)
    sigma_intra: float = 0.75
    sigma_min: float = 0.11
    sigma_max: float = 64.0
    sigma_levels: int = 64

    def __post_init__(self):
        if self.enc_channels[0] != self.ctx_channels[0]:
            raise ProfileError(
                "scale-0 transform width must equal the scale-0 context width "
                f"(got {self.enc_channels[0]} vs {self.ctx_channels[0]})"
            )
        if len(self.base_steps) != 4:
            raise ProfileError("base_steps must list one step per qp 0..3")

    def to_json(self) -> dict:
        return {
            "enc_channels": list(self.enc_channels),
            "ctx_channels": list(self.ctx_channels),
            "motion_block": self.motion_block,
            "motion_search": self.motion_search,
            "base_steps": list(self.base_steps),
            "quality_weights": list(self.quality_weights),
            "sigma_intra": self.sigma_intra,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "sigma_levels": self.sigma_levels,
        }

    @staticmethod
    def from_json(d: dict) -> "CodecConfig":
        return CodecConfig(
            enc_channels=tuple(d["enc_channels"]),
            ctx_channels=tuple(d["ctx_channels"]),
            motion_block=int(d["motion_block"]),
            motion_search=int(d["motion_search"]),
            base_steps=tuple(d["base_steps"]),
            quality_weights=tuple(d["quality_weights"]),
            sigma_intra=float(d["sigma_intra"]),
            sigma_min=float(d["sigma_min"]),
            sigma_max=float(d["sigma_max"]),
            sigma_levels=int(d["sigma_levels"]),
        )


IDENTITY_CONFIG = CodecConfig(enc_channels=(3, 12, 48, 192), ctx_channels=(3, 3, 3))


@dataclass
class ParamSet:
    config: CodecConfig
    profile_id: int
    profile_name: str
    seed: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def t(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise ProfileError(f"parameter file is missing tensor {name!r}") from None

    def conv(self, prefix: str) -> tuple[np.ndarray, np.ndarray]:
        return self.t(prefix + ".w"), self.t(prefix + ".b")


def _softplus_inv(y: float) -> float:
    return math.log(math.expm1(y))


def _tensor_inventory(cfg: CodecConfig) -> dict[str, tuple[int, ...]]:
    """Name -> weight shape for every conv in the codec (biases are implied)."""
    c0, c1, c2, c3 = cfg.enc_channels
    d = cfg.ctx_channels
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(name, shape):
        shapes[name + ".w"] = shape
        shapes[name + ".b"] = (shape[0],)

    # conditional (B-frame) transform ladder; contexts concatenated per scale
    conv("enc.conv_in", (c0, 3, 3, 3))
    conv("enc.down1", (c1, c0 + d[0], 3, 3))
    conv("enc.down2", (c2, c1 + d[1], 3, 3))
    conv("enc.down3", (c3, c2 + d[2], 3, 3))
    conv("dec.up1", (4 * c2, c3, 3, 3))
    conv("dec.up2", (4 * c1, c2 + d[2], 3, 3))
    conv("dec.up3", (4 * c0, c1 + d[1], 3, 3))
    # context-free intra ladder of the same shape
    conv("intra.conv_in", (c0, 3, 3, 3))
    conv("intra.down1", (c1, c0, 3, 3))
    conv("intra.down2", (c2, c1, 3, 3))
    conv("intra.down3", (c3, c2, 3, 3))
    conv("intra.up1", (4 * c2, c3, 3, 3))
    conv("intra.up2", (4 * c1, c2, 3, 3))
    conv("intra.up3", (4 * c0, c1, 3, 3))
    # width adapters applied after each 2x feature downsampling
    conv("feat_down1", (d[1], d[0]))
    conv("feat_down2", (d[2], d[1]))
    # shared attention per scale: query embed + DWConv trunk + key/value embeds
    for s in range(3):
        ds, cs = d[s], cfg.enc_channels[s]
        conv(f"attn{s}.q", (ds, cs))
        conv(f"attn{s}.trunk.pw1", (ds, ds))
        shapes[f"attn{s}.trunk.dw.w"] = (ds, 3, 3)
        shapes[f"attn{s}.trunk.dw.b"] = (ds,)
        conv(f"attn{s}.trunk.pw2", (ds, ds))
        conv(f"attn{s}.k", (ds, ds))
        conv(f"attn{s}.v", (ds, ds))
    # context gating per scale and per layout
    for s in range(3):
        ds, cs = d[s], cfg.enc_channels[s]
        masks = (LAYOUTS[0],) if s == 0 else LAYOUTS
        for lm in masks:
            tag = layout_tag(lm)
            n_slots = len(layout_slots(lm))
            nin = cs + 2 * n_slots * ds  # latent + locals + nonlocals
            shapes[f"gate{s}.{tag}.mask.dw.w"] = (nin, 3, 3)
            shapes[f"gate{s}.{tag}.mask.dw.b"] = (nin,)
            conv(f"gate{s}.{tag}.mask.pw", (ds, nin))
            conv(f"gate{s}.{tag}.mask.ffn1", (2 * ds, ds))
            conv(f"gate{s}.{tag}.mask.ffn2", (ds, 2 * ds))
            conv(f"gate{s}.{tag}.reduce", (ds, 2 * n_slots * ds))
    # entropy prior: local-context gate at scale 2 plus the model head
    for lm in LAYOUTS:
        tag = layout_tag(lm)
        n_slots = len(layout_slots(lm))
        nin = n_slots * d[2]
        shapes[f"prior.{tag}.mask.dw.w"] = (nin, 3, 3)
        shapes[f"prior.{tag}.mask.dw.b"] = (nin,)
        conv(f"prior.{tag}.mask.pw", (d[2], nin))
        conv(f"prior.{tag}.mask.ffn1", (2 * d[2], d[2]))
        conv(f"prior.{tag}.mask.ffn2", (d[2], 2 * d[2]))
        conv(f"prior.{tag}.reduce", (d[2], n_slots * d[2]))
    conv("head", (2 * c3, d[2], 2, 2))
    # feature generation + reconstruction
    nfg = c0 + d[0]
    shapes["fg.block1.dw.w"] = (nfg, 3, 3)
    shapes["fg.block1.dw.b"] = (nfg,)
    conv("fg.block1.pw", (d[0], nfg))
    conv("fg.block1.ffn1", (2 * d[0], d[0]))
    conv("fg.block1.ffn2", (d[0], 2 * d[0]))
    shapes["fg.block2.dw.w"] = (d[0], 3, 3)
    shapes["fg.block2.dw.b"] = (d[0],)
    conv("fg.block2.pw", (d[0], d[0]))
    conv("fg.block2.ffn1", (2 * d[0], d[0]))
    conv("fg.block2.ffn2", (d[0], 2 * d[0]))
    conv("recon", (3, d[0], 3, 3))
    # pass-through refinement stage on accumulated flows
    conv("acc_refine", (2, 2, 3, 3))
    return shapes


def _identity_3x3(cout: int, cin: int, copies: int | None = None) -> np.ndarray:
    w = np.zeros((cout, cin, 3, 3), dtype=FLOAT)
    for o in range(copies if copies is not None else min(cout, cin)):
        w[o, o, 1, 1] = 1.0
    return w


def _s2d_weights(cout: int, cin: int, src: int) -> np.ndarray:
    # stride-2 conv realizing space_to_depth on the first `src` input channels
    w = np.zeros((cout, cin, 3, 3), dtype=FLOAT)
    for c in range(src):
        for dy in range(2):
            for dx in range(2):
                w[c * 4 + dy * 2 + dx, c, dy + 1, dx + 1] = 1.0
    return w


def generate_seeded(seed: int, config: CodecConfig | None = None) -> ParamSet:
    """Deterministic random profile: every tensor from its own named stream."""
    cfg = config or CodecConfig()
    shapes = _tensor_inventory(cfg)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in sorted(shapes.items()):
        stream = np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(name.encode())])
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=FLOAT)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = 1.4 / math.sqrt(fan_in)
            tensors[name] = (stream.standard_normal(shape) * std).astype(FLOAT)
    # inert refinement stage and a sane starting spread for the entropy head
    tensors["acc_refine.w"] = _identity_3x3(2, 2)
    tensors["acc_refine.b"] = np.zeros(2, dtype=FLOAT)
    c3 = cfg.enc_channels[3]
    head_b = tensors["head.b"].copy()
    head_b[c3:] = _softplus_inv(cfg.sigma_intra)
    tensors["head.b"] = head_b
    return ParamSet(
        config=cfg,
        profile_id=1 + (seed % 255),
        profile_name="seeded",
        seed=seed,
        tensors=tensors,
    )


def generate_identity() -> ParamSet:
    """Exact space-to-depth ladders; entropy head predicts warped content."""
    cfg = IDENTITY_CONFIG
    shapes = _tensor_inventory(cfg)
    tensors = {
        name: np.zeros(shape, dtype=FLOAT) for name, shape in shapes.items()
    }
    c0, c1, c2, c3 = cfg.enc_channels
    d = cfg.ctx_channels

    tensors["enc.conv_in.w"] = _identity_3x3(c0, 3)
    tensors["enc.down1.w"] = _s2d_weights(c1, c0 + d[0], c0)
    tensors["enc.down2.w"] = _s2d_weights(c2, c1 + d[1], c1)
    tensors["enc.down3.w"] = _s2d_weights(c3, c2 + d[2], c2)
    tensors["dec.up1.w"] = _identity_3x3(4 * c2, c3)
    tensors["dec.up2.w"] = _identity_3x3(4 * c1, c2 + d[2], copies=4 * c1)
    tensors["dec.up3.w"] = _identity_3x3(4 * c0, c1 + d[1], copies=4 * c0)
    tensors["intra.conv_in.w"] = _identity_3x3(c0, 3)
    tensors["intra.down1.w"] = _s2d_weights(c1, c0, c0)
    tensors["intra.down2.w"] = _s2d_weights(c2, c1, c1)
    tensors["intra.down3.w"] = _s2d_weights(c3, c2, c2)
    tensors["intra.up1.w"] = _identity_3x3(4 * c2, c3)
    tensors["intra.up2.w"] = _identity_3x3(4 * c1, c2)
    tensors["intra.up3.w"] = _identity_3x3(4 * c0, c1)
    tensors["recon.w"] = _identity_3x3(3, d[0])
    tensors["acc_refine.w"] = _identity_3x3(2, 2)
    tensors["feat_down1.w"] = np.eye(d[1], d[0], dtype=FLOAT)
    tensors["feat_down2.w"] = np.eye(d[2], d[1], dtype=FLOAT)

    # prior gate saturates open so the reduced local contexts pass through
    for lm in LAYOUTS:
        tag = layout_tag(lm)
        n_slots = len(layout_slots(lm))
        tensors[f"prior.{tag}.mask.pw.b"] = np.full(d[2], 30.0, dtype=FLOAT)
        red = np.zeros((d[2], n_slots * d[2]), dtype=FLOAT)
        for c in range(d[2]):
            for s in range(n_slots):
                red[c, s * d[2] + c] = 1.0 / n_slots
        tensors[f"prior.{tag}.reduce.w"] = red

    # head: mean prediction of each 8x8 block per color; fixed small sigma
    head_w = np.zeros((2 * c3, d[2], 2, 2), dtype=FLOAT)
    for o in range(c3):
        head_w[o, o // 64, :, :] = 0.25
    tensors["head.w"] = head_w
    head_b = np.zeros(2 * c3, dtype=FLOAT)
    head_b[c3:] = _softplus_inv(0.2)
    tensors["head.b"] = head_b

    return ParamSet(
        config=cfg, profile_id=0, profile_name="identity", seed=0, tensors=tensors
    )


def generate(profile: str, seed: int = 2024, config: CodecConfig | None = None) -> ParamSet:
    if profile == "identity":
        if config is not None and config != IDENTITY_CONFIG:
            raise ProfileError("the identity profile uses a fixed channel configuration")
        return generate_identity()
    if profile == "seeded":
        return generate_seeded(seed, config)
    raise ProfileError(f"unknown profile {profile!r} (expected 'seeded' or 'identity')")


def save_params(ps: ParamSet, path: str) -> None:
    meta = {
        "format": "becv-params",
        "version": PARAMS_VERSION,
        "profile_id": ps.profile_id,
        "profile_name": ps.profile_name,
        "seed": ps.seed,
        "config": ps.config.to_json(),
    }
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **ps.tensors)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_params(path: str) -> ParamSet:
    try:
        with np.load(path) as z:
            if "__meta__" not in z:
                raise ProfileError(f"{path}: not a parameter file (missing metadata)")
            meta = json.loads(bytes(z["__meta__"]).decode())
            tensors = {k: z[k].astype(FLOAT) for k in z.files if k != "__meta__"}
    except (OSError, ValueError) as exc:
        raise ProfileError(f"cannot read parameter file {path}: {exc}") from exc
    if meta.get("format") != "becv-params":
        raise ProfileError(f"{path}: not a codec parameter file")
    if meta.get("version") != PARAMS_VERSION:
        raise ProfileError(
            f"{path}: parameter version {meta.get('version')} unsupported "
            f"(expected {PARAMS_VERSION})"
        )
    cfg = CodecConfig.from_json(meta["config"])
    expected = _tensor_inventory(cfg)
    for name, shape in expected.items():
        if name not in tensors:
            raise ProfileError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise ProfileError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
    return ParamSet(
        config=cfg,
        profile_id=int(meta["profile_id"]),
        profile_name=str(meta["profile_name"]),
        seed=int(meta["seed"]),
        tensors=tensors,
    )
