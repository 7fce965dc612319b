"""Command-line interface.

Subcommands: genparams, encode, decode, metrics, and inspect
{plan,flow,attention,gate}. Raw video is planar RGB, 8 bit, frame-major,
headerless; dimensions always come from flags.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import gop, motion
from .contexts import attend_quadratic, embed_query
from .errors import CodecError
from .params import generate, load_params, save_params
from .pipeline import SequenceJob, decode_sequence, encode_sequence, metrics, scan_stream
from .video_io import read_raw_video, write_raw_video


def _add_video_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="raw planar RGB file")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="becv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("genparams", help="generate a parameter file")
    g.add_argument("--seed", type=int, default=2024)
    g.add_argument("--profile", choices=("seeded", "identity"), default="seeded")
    g.add_argument("--out", required=True)

    e = sub.add_parser("encode", help="encode raw video to a bitstream")
    _add_video_flags(e)
    e.add_argument("--ip", type=int, required=True, help="intra period (power of two)")
    e.add_argument("--qp", type=int, required=True, help="quality index 0..3")
    e.add_argument("--profile", required=True, help="parameter file")
    e.add_argument("--no-cache", action="store_true", help="disable the feature cache")
    e.add_argument("--out", required=True, help="bitstream output path")
    e.add_argument("--report", help="directory for report.csv and figures")

    d = sub.add_parser("decode", help="decode a bitstream to raw video")
    d.add_argument("--in", dest="inp", required=True, help="bitstream input path")
    d.add_argument("--profile", required=True)
    d.add_argument("--no-cache", action="store_true")
    d.add_argument("--out", required=True, help="raw video output path")

    m = sub.add_parser("metrics", help="PSNR/rate report between two raw videos")
    m.add_argument("--orig", required=True)
    m.add_argument("--recon", required=True)
    m.add_argument("--width", type=int, required=True)
    m.add_argument("--height", type=int, required=True)
    m.add_argument("--frames", type=int, required=True)
    m.add_argument("--bitstream", help="optional stream to recover rate allocation from")
    m.add_argument("--report", required=True, help="output directory")

    ins = sub.add_parser("inspect", help="debugging dumps")
    isub = ins.add_subparsers(dest="what", required=True)

    ip = isub.add_parser("plan", help="dump the coding plan")
    ip.add_argument("--ip", type=int, required=True)
    ip.add_argument("--frames", type=int, required=True)

    fl = isub.add_parser("flow", help="dump an estimated flow field as a text grid")
    _add_video_flags(fl)
    fl.add_argument("--t", type=int, required=True, help="current frame index")
    fl.add_argument("--ref", type=int, required=True, help="reference frame index")
    fl.add_argument("--block", type=int, default=8)
    fl.add_argument("--search", type=int, default=4)

    at = isub.add_parser("attention", help="dump one similarity row as a heat grid")
    _add_video_flags(at)
    at.add_argument("--ip", type=int, required=True)
    at.add_argument("--qp", type=int, default=2)
    at.add_argument("--profile", required=True)
    at.add_argument("--t", type=int, required=True)
    at.add_argument("--scale", type=int, choices=(0, 1, 2), required=True)
    at.add_argument("--pos", required=True, help="query position as x,y at that scale")

    ga = isub.add_parser("gate", help="dump per-channel mean gate values")
    _add_video_flags(ga)
    ga.add_argument("--ip", type=int, required=True)
    ga.add_argument("--qp", type=int, default=2)
    ga.add_argument("--profile", required=True)
    ga.add_argument("--t", type=int, required=True)
    ga.add_argument("--scale", type=int, choices=(0, 1, 2), required=True)
    return parser


def _cmd_genparams(args) -> int:
    ps = generate(args.profile, seed=args.seed)
    save_params(ps, args.out)
    print(f"wrote {args.profile} profile (id {ps.profile_id}) to {args.out}")
    return 0


def _cmd_encode(args) -> int:
    params = load_params(args.profile)
    frames = read_raw_video(args.input, args.width, args.height, args.frames)
    job = SequenceJob(
        frames=frames, intra_period=args.ip, qp=args.qp, cache_enabled=not args.no_cache
    )
    stats: dict = {}
    recon: list = []
    stream, reports = encode_sequence(job, params, stats_out=stats, recon_out=recon)
    with open(args.out, "wb") as f:
        f.write(stream)
    print("t kind layer bits_motion bits_latent psnr")
    for rep in reports:
        print(f"{rep.t} {rep.kind} {rep.layer} {rep.bits_motion} {rep.bits_latent} "
              f"{rep.psnr:.3f}")
    summary = metrics(frames, np.stack(recon), reports)
    print(summary.format())
    c = stats["cache"]
    print(f"cache: hits={c.hits} misses={c.misses} stores={c.stores} "
          f"evictions={c.evictions} peak={c.peak_entries}")
    print(f"encoded {len(stream)} bytes in {stats['seconds']:.2f}s -> {args.out}")
    if args.report:
        from .report import write_report

        for path in write_report(args.report, summary, reports):
            print(f"report: {path}")
    return 0


def _cmd_decode(args) -> int:
    params = load_params(args.profile)
    with open(args.inp, "rb") as f:
        data = f.read()
    stats: dict = {}
    frames = decode_sequence(data, params, cache_enabled=not args.no_cache, stats_out=stats)
    write_raw_video(args.out, frames)
    c = stats["cache"]
    print(f"decoded {frames.shape[0]} frames of {frames.shape[3]}x{frames.shape[2]} "
          f"in {stats['seconds']:.2f}s -> {args.out}")
    print(f"cache: hits={c.hits} misses={c.misses} stores={c.stores} "
          f"evictions={c.evictions} peak={c.peak_entries}")
    return 0


def _cmd_metrics(args) -> int:
    orig = read_raw_video(args.orig, args.width, args.height, args.frames)
    recon = read_raw_video(args.recon, args.width, args.height, args.frames)
    reports = None
    if args.bitstream:
        with open(args.bitstream, "rb") as f:
            _, reports = scan_stream(f.read())
        if len(reports) != args.frames:
            raise CodecError(
                f"bitstream holds {len(reports)} frames, flags say {args.frames}"
            )
    summary = metrics(orig, recon, reports)
    print(summary.format())
    from .report import write_report

    for path in write_report(args.report, summary, reports):
        print(f"report: {path}")
    return 0


def _cmd_inspect_plan(args) -> int:
    print(gop.format_plan(gop.build_plan(args.ip, args.frames)))
    return 0


def _cmd_inspect_flow(args) -> int:
    frames = read_raw_video(args.input, args.width, args.height, args.frames)
    if not (0 <= args.t < args.frames and 0 <= args.ref < args.frames):
        raise CodecError("--t/--ref outside the sequence")
    flow = motion.estimate_flow(frames[args.t], frames[args.ref],
                                block=args.block, search=args.search)
    print(motion.format_flow(flow))
    return 0


def _run_tapped(args, wanted_stage: str):
    """Encode until frame args.t has been coded, collecting tap events."""
    params = load_params(args.profile)
    frames = read_raw_video(args.input, args.width, args.height, args.frames)
    events = []

    def tap(stage, t, scale, payload):
        if stage == wanted_stage and t == args.t and scale == args.scale:
            events.append(payload)

    job = SequenceJob(frames=frames, intra_period=args.ip, qp=args.qp)
    encode_sequence(job, params, tap=tap)
    if not events:
        raise CodecError(
            f"frame {args.t} produced no {wanted_stage} data at scale {args.scale} "
            "(intra frame, or scale without contexts)"
        )
    return params, events[-1]


def _cmd_inspect_attention(args) -> int:
    params, payload = _run_tapped(args, "attention")
    x, y = (int(v) for v in args.pos.split(","))
    q = embed_query(payload["query_src"], params, args.scale)
    h, w = q.shape[1:]
    if not (0 <= x < w and 0 <= y < h):
        raise CodecError(f"--pos {x},{y} outside the {w}x{h} scale-{args.scale} grid")
    row_index = y * w + x
    for slot, (k, v) in payload["kv"].items():
        _, sim = attend_quadratic(q, k, v)
        grid = sim[row_index].reshape(h, w)
        peak = grid.max()
        print(f"[slot {slot} <- frame {payload['sources'][slot]}] "
              f"query=({x},{y}) row sum={grid.sum():.6f} peak={peak:.3e}")
        scaled = np.rint(grid / peak * 99).astype(int) if peak > 0 else np.zeros_like(grid, int)
        for r in scaled:
            print(" ".join(f"{v:02d}" for v in r))
    return 0


def _cmd_inspect_gate(args) -> int:
    _, m = _run_tapped(args, "gate")
    means = m.mean(axis=(1, 2))
    print(f"gate values at frame {args.t}, scale {args.scale}: "
          f"{m.shape[0]} channels, overall mean {means.mean():.4f}")
    for c, v in enumerate(means):
        print(f"ch {c:3d}: {v:.4f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "genparams":
            return _cmd_genparams(args)
        if args.command == "encode":
            return _cmd_encode(args)
        if args.command == "decode":
            return _cmd_decode(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "inspect":
            return {
                "plan": _cmd_inspect_plan,
                "flow": _cmd_inspect_flow,
                "attention": _cmd_inspect_attention,
                "gate": _cmd_inspect_gate,
            }[args.what](args)
        raise CodecError(f"unknown command {args.command}")
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
