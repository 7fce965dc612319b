import os

import numpy as np
import pytest

from becv.cli import main
from becv.video_io import read_raw_video, write_raw_video


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    h = w = 24
    yy, xx = np.meshgrid(np.arange(h + 16), np.arange(w + 16), indexing="ij")
    base = 0.5 + 0.3 * np.sin(2 * np.pi * yy / 20.0) * np.cos(2 * np.pi * xx / 16.0)
    frames = []
    for t in range(6):
        f = base[4 + t : 4 + t + h, 4 : 4 + w]
        frames.append(np.stack([f, 0.8 * f + 0.1, 1 - f]))
    write_raw_video(str(d / "in.rgb"), np.clip(np.stack(frames), 0, 1))
    assert main(["genparams", "--profile", "seeded", "--seed", "11",
                 "--out", str(d / "p.npz")]) == 0
    return d


VIDEO = ["--width", "24", "--height", "24", "--frames", "6"]


def test_encode_decode_metrics_roundtrip(workdir, capsys):
    d = workdir
    rc = main(["encode", "--input", str(d / "in.rgb"), *VIDEO,
               "--ip", "4", "--qp", "2", "--profile", str(d / "p.npz"),
               "--out", str(d / "out.becv"), "--report", str(d / "rep")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "cache: hits=" in out and "bpp" in out
    for name in ("report.csv", "psnr_per_frame.png", "bits_per_frame.png",
                 "bits_by_layer.png"):
        assert (d / "rep" / name).exists(), name

    assert main(["decode", "--in", str(d / "out.becv"), "--profile", str(d / "p.npz"),
                 "--out", str(d / "dec.rgb")]) == 0
    dec = read_raw_video(str(d / "dec.rgb"), 24, 24, 6)
    assert dec.shape == (6, 3, 24, 24)

    assert main(["metrics", "--orig", str(d / "in.rgb"), "--recon", str(d / "dec.rgb"),
                 *VIDEO, "--bitstream", str(d / "out.becv"),
                 "--report", str(d / "rep2")]) == 0
    out = capsys.readouterr().out
    assert "mean psnr" in out
    assert (d / "rep2" / "report.csv").exists()
    with open(d / "rep2" / "report.csv") as f:
        header = f.readline().strip().split(",")
    assert header == ["t", "kind", "layer", "bits_motion", "bits_latent",
                      "bits_total", "psnr"]


def test_no_cache_flag_changes_nothing(workdir, capsys):
    d = workdir
    assert main(["encode", "--input", str(d / "in.rgb"), *VIDEO,
                 "--ip", "4", "--qp", "2", "--profile", str(d / "p.npz"),
                 "--no-cache", "--out", str(d / "out_nc.becv")]) == 0
    capsys.readouterr()
    with open(d / "out.becv", "rb") as a, open(d / "out_nc.becv", "rb") as b:
        assert a.read() == b.read()


def test_inspect_plan(capsys):
    assert main(["inspect", "plan", "--ip", "8", "--frames", "9"]) == 0
    out = capsys.readouterr().out
    assert "3 B 3 1 refs=[0,2,4,8]" in out


def test_inspect_flow(workdir, capsys):
    d = workdir
    assert main(["inspect", "flow", "--input", str(d / "in.rgb"), *VIDEO,
                 "--t", "2", "--ref", "0", "--block", "8", "--search", "3"]) == 0
    out = capsys.readouterr().out
    assert "[dx]" in out and "[dy]" in out


def test_inspect_attention(workdir, capsys):
    d = workdir
    assert main(["inspect", "attention", "--input", str(d / "in.rgb"), *VIDEO,
                 "--ip", "4", "--qp", "2", "--profile", str(d / "p.npz"),
                 "--t", "2", "--scale", "1", "--pos", "3,2"]) == 0
    out = capsys.readouterr().out
    assert "slot back" in out and "row sum=" in out
    # row of the implicit similarity matrix sums to one
    for line in out.splitlines():
        if "row sum=" in line:
            s = float(line.split("row sum=")[1].split()[0])
            assert abs(s - 1.0) < 1e-4


def test_inspect_gate(workdir, capsys):
    d = workdir
    assert main(["inspect", "gate", "--input", str(d / "in.rgb"), *VIDEO,
                 "--ip", "4", "--qp", "2", "--profile", str(d / "p.npz"),
                 "--t", "2", "--scale", "0"]) == 0
    out = capsys.readouterr().out
    assert "gate values at frame 2" in out
    assert "ch   0:" in out


def test_decode_wrong_profile_fails_loudly(workdir, capsys):
    d = workdir
    assert main(["genparams", "--profile", "identity", "--out", str(d / "pid.npz")]) == 0
    rc = main(["decode", "--in", str(d / "out.becv"), "--profile", str(d / "pid.npz"),
               "--out", str(d / "bad.rgb")])
    assert rc == 1
    assert "profile" in capsys.readouterr().err
    assert not os.path.exists(d / "bad.rgb")


def test_intra_frame_has_no_gate_data(workdir, capsys):
    d = workdir
    rc = main(["inspect", "gate", "--input", str(d / "in.rgb"), *VIDEO,
               "--ip", "4", "--qp", "2", "--profile", str(d / "p.npz"),
               "--t", "0", "--scale", "0"])
    assert rc == 1
    assert "no gate data" in capsys.readouterr().err
