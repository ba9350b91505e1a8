"""File formats (cube files, weight checkpoints, config text) and the
command-line interface."""

import struct

import numpy as np
import pytest

from ssmdenoise.cli import main
from ssmdenoise.hsio import (DataError, checkpoint_bytes, load_checkpoint, load_cube,
                             parse_config_text, save_checkpoint, store_cube)
from ssmdenoise.model import ModelConfig, init_model, named_parameters
from ssmdenoise.noise import synth_clean_cube
from ssmdenoise.rng import Rng

# -- cube files ----------------------------------------------------------------


def test_cube_roundtrip_bitwise_f32(tmp_path):
    x = Rng(0).uniform(size=(3, 4, 5)).astype(np.float32)
    p = tmp_path / "a.hsic"
    store_cube(p, x)
    y = load_cube(p)
    assert y.dtype == np.float32
    assert y.tobytes() == x.tobytes()


def test_cube_roundtrip_bitwise_f64(tmp_path):
    x = Rng(1).uniform(size=(2, 3, 3))
    p = tmp_path / "b.hsic"
    store_cube(p, x)
    y = load_cube(p)
    assert y.dtype == np.float64
    assert y.tobytes() == x.tobytes()


def test_cube_header_layout(tmp_path):
    x = np.zeros((2, 3, 4), dtype=np.float32)
    p = tmp_path / "c.hsic"
    store_cube(p, x)
    raw = p.read_bytes()
    assert raw[:4] == b"HSIC"
    version, tag = struct.unpack("<HH", raw[4:8])
    assert (version, tag) == (1, 0)
    assert struct.unpack("<III", raw[8:20]) == (2, 3, 4)
    assert len(raw) == 20 + 2 * 3 * 4 * 4


def test_cube_bad_magic(tmp_path):
    p = tmp_path / "bad.hsic"
    p.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(DataError):
        load_cube(p)


def test_cube_truncated_payload(tmp_path):
    x = np.zeros((2, 2, 2), dtype=np.float32)
    p = tmp_path / "t.hsic"
    store_cube(p, x)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(DataError):
        load_cube(p)


def test_cube_nan_payload_rejected(tmp_path):
    x = np.zeros((1, 2, 2), dtype=np.float32)
    p = tmp_path / "n.hsic"
    store_cube(p, x)
    raw = bytearray(p.read_bytes())
    raw[20:24] = struct.pack("<f", float("nan"))
    p.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        load_cube(p)


# -- checkpoints ---------------------------------------------------------------


def test_checkpoint_roundtrip_bitwise(tmp_path):
    cfg = ModelConfig(base_channels=2, state_dim=2, res_blocks=1,
                      scan_schemes=("SWEEP",) * 6, bidirectional=False)
    mw = init_model(cfg, seed=5)
    p = tmp_path / "w.ssuw"
    save_checkpoint(p, mw)
    back = load_checkpoint(p)
    assert back.config == cfg
    for (na, ta), (nb, tb) in zip(named_parameters(mw), named_parameters(back)):
        assert na == nb
        assert ta.data.tobytes() == tb.data.tobytes()
    # and a re-save is byte-identical
    assert checkpoint_bytes(back) == p.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "bad.ssuw"
    p.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(DataError):
        load_checkpoint(p)


# -- config text ---------------------------------------------------------------


def test_parse_config_text():
    kv = parse_config_text("""
# comment
train.lr = 0.001
model.base_channels = 4  # trailing comment
""")
    assert kv == {"train.lr": "0.001", "model.base_channels": "4"}


def test_parse_config_errors():
    with pytest.raises(DataError):
        parse_config_text("not a key value line")
    with pytest.raises(DataError):
        parse_config_text("nosection = 3")
    with pytest.raises(DataError):
        parse_config_text("a.b = 1\na.b = 2")


# -- CLI -----------------------------------------------------------------------


def write_cube(tmp_path, name="in.hsic", shape=(6, 16, 16), seed=0):
    x = synth_clean_cube(*shape, rank=2, seed=seed).astype(np.float32)
    p = tmp_path / name
    store_cube(p, x)
    return p, x


def test_cli_scan_matches_reference(tmp_path, capsys):
    csv = tmp_path / "scan.csv"
    assert main(["scan", "--scheme", "RCB", "--dims", "2,2,2", "--csv", str(csv)]) == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "position,band,row,col"
    assert lines[1] == "0,0,0,0"
    assert lines[2] == "1,0,0,1"
    assert len(lines) == 9
    assert "continuity violations: 0" in capsys.readouterr().out


def test_cli_scan_bad_scheme_exit_code():
    assert main(["scan", "--scheme", "ZZZ", "--dims", "2,2,2"]) == 3


def test_cli_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as e:
        main(["scan"])  # missing required args
    assert e.value.code == 2


def test_cli_eval_identity(tmp_path, capsys):
    p, _ = write_cube(tmp_path)
    assert main(["eval", "--clean", str(p), "--test", str(p)]) == 0
    out = capsys.readouterr().out
    assert "psnr 120.00" in out and "ssim 1.0000" in out and "sam 0.0000" in out


def test_cli_eval_missing_file(tmp_path, capsys):
    p, _ = write_cube(tmp_path)
    assert main(["eval", "--clean", str(p), "--test", str(tmp_path / "nope.hsic")]) == 3


def test_cli_noise_noop_and_determinism(tmp_path, capsys):
    p, x = write_cube(tmp_path)
    cfg = tmp_path / "noise.cfg"
    cfg.write_text("noise.sigma_max = 0\nnoise.gaussian = false\n")
    out1, out2 = tmp_path / "o1.hsic", tmp_path / "o2.hsic"
    assert main(["noise", "--config", str(cfg), "--seed", "7", "--in", str(p), "--out", str(out1)]) == 0
    assert load_cube(out1).tobytes() == x.tobytes()
    cfg.write_text("noise.sigma_max = 95\nnoise.impulse = true\n")
    assert main(["noise", "--config", str(cfg), "--seed", "7", "--in", str(p), "--out", str(out1)]) == 0
    assert main(["noise", "--config", str(cfg), "--seed", "7", "--in", str(p), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_noise_reports_impulse_bands_31(tmp_path, capsys):
    x = synth_clean_cube(31, 8, 8, rank=2, seed=3).astype(np.float32)
    p = tmp_path / "c31.hsic"
    store_cube(p, x)
    cfg = tmp_path / "n.cfg"
    cfg.write_text("noise.sigma_max = 95\nnoise.impulse = true\n")
    assert main(["noise", "--config", str(cfg), "--seed", "1", "--in", str(p),
                 "--out", str(tmp_path / "o.hsic")]) == 0
    err = capsys.readouterr().err
    assert "impulse bands (10):" in err


def test_cli_noise_unknown_key(tmp_path):
    p, _ = write_cube(tmp_path)
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("noise.wibble = 3\n")
    assert main(["noise", "--config", str(cfg), "--seed", "1", "--in", str(p),
                 "--out", str(tmp_path / "o.hsic")]) == 3


TRAIN_CFG = """
model.base_channels = 2
model.state_dim = 2
model.res_blocks = 1
noise.sigma_max = 25
train.epochs = 1
train.steps_per_epoch = 2
train.batch_size = 2
train.patch_bands = 4
train.patch_rows = 8
train.patch_cols = 8
data.cubes = 2
data.bands = 4
data.rows = 16
data.cols = 16
"""


def test_cli_train_denoise_eval_pipeline(tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN_CFG)
    outdir = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(outdir)]) == 0
    assert (outdir / "weights.ssuw").exists()
    assert (outdir / "loss.csv").read_text().startswith("step,loss")
    assert "parameters:" in (outdir / "summary.txt").read_text()

    p, x = write_cube(tmp_path, shape=(4, 16, 16), seed=5)
    restored = tmp_path / "restored.hsic"
    png = tmp_path / "view.png"
    assert main(["denoise", "--weights", str(outdir / "weights.ssuw"),
                 "--in", str(p), "--out", str(restored),
                 "--png", str(png), "--bands", "3,1,0"]) == 0
    assert load_cube(restored).shape == (4, 16, 16)
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert main(["eval", "--clean", str(p), "--test", str(restored)]) == 0


def test_cli_denoise_pads_odd_extents(tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN_CFG.replace("train.epochs = 1", "train.epochs = 0"))
    outdir = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(outdir)]) == 0
    x = synth_clean_cube(4, 10, 11, rank=2, seed=6).astype(np.float32)
    p = tmp_path / "odd.hsic"
    store_cube(p, x)
    restored = tmp_path / "r.hsic"
    assert main(["denoise", "--weights", str(outdir / "weights.ssuw"),
                 "--in", str(p), "--out", str(restored)]) == 0
    assert load_cube(restored).shape == (4, 10, 11)


def test_cli_denoise_band_groups(tmp_path):
    """More bands than the group size: sliding groups averaged over overlaps."""
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN_CFG.replace("train.epochs = 1", "train.epochs = 0"))
    outdir = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(outdir)]) == 0
    x = synth_clean_cube(9, 8, 8, rank=2, seed=7).astype(np.float32)
    p = tmp_path / "many.hsic"
    store_cube(p, x)
    r1, r2 = tmp_path / "r1.hsic", tmp_path / "r2.hsic"
    assert main(["denoise", "--weights", str(outdir / "weights.ssuw"),
                 "--in", str(p), "--out", str(r1), "--band-group", "4"]) == 0
    assert load_cube(r1).shape == (9, 8, 8)
    # threaded evaluation returns the same bytes as the sequential path
    assert main(["denoise", "--weights", str(outdir / "weights.ssuw"),
                 "--in", str(p), "--out", str(r2), "--band-group", "4",
                 "--threads", "2"]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_cli_train_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN_CFG + "train.wibble = 1\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_cli_train_same_seed_byte_identical(tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN_CFG)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(b)]) == 0
    assert (a / "weights.ssuw").read_bytes() == (b / "weights.ssuw").read_bytes()
