"""Bit-exact external file formats and the flat key-value config syntax.

Cube files (.hsic): magic "HSIC", u16 version, u16 dtype tag (0 = f32-LE,
1 = f64-LE), three u32 extents (bands, rows, cols), then the raw payload
in (band, row, col) row-major order.

Weight checkpoints (.ssuw): magic "SSUW", u32 version, a manifest of
(name, shape, payload offset) entries, then all values as raw 32-bit
little-endian floats.  Model hyperparameters ride along as "cfg.*"
manifest entries so a checkpoint is self-describing.

Config files: one "section.key = value" per line, '#' comments, unknown
keys are hard errors.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from . import scan
from .model import ModelConfig, ModelWeights, init_model, named_parameters


class DataError(ValueError):
    """Malformed file, bad config, or shape mismatch (CLI exit code 3)."""


# -- cube files ---------------------------------------------------------------

_HSIC_MAGIC = b"HSIC"
_HSIC_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def store_cube(path, cube: np.ndarray) -> None:
    cube = np.ascontiguousarray(cube)
    if cube.ndim != 3:
        raise DataError(f"cube must be (bands, rows, cols), got shape {cube.shape}")
    tag = 0 if cube.dtype == np.float32 else 1
    cube = cube.astype(_DTYPES[tag], copy=False)
    with open(path, "wb") as fh:
        fh.write(_HSIC_MAGIC)
        fh.write(struct.pack("<HH", _HSIC_VERSION, tag))
        fh.write(struct.pack("<III", *cube.shape))
        fh.write(cube.tobytes())


def load_cube(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(20)
        if len(head) != 20 or head[:4] != _HSIC_MAGIC:
            raise DataError(f"{path}: not a cube file (bad magic)")
        version, tag = struct.unpack("<HH", head[4:8])
        if version != _HSIC_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        if tag not in _DTYPES:
            raise DataError(f"{path}: unknown dtype tag {tag}")
        dims = struct.unpack("<III", head[8:20])
        dtype = _DTYPES[tag]
        n = int(np.prod(dims))
        if n > 2**31:
            raise DataError(f"{path}: extent overflow {dims}")
        payload = fh.read()
    if len(payload) != n * dtype.itemsize:
        raise DataError(f"{path}: payload length {len(payload)} does not match extents {dims}")
    cube = np.frombuffer(payload, dtype=dtype).reshape(dims)
    if not np.all(np.isfinite(cube)):
        raise DataError(f"{path}: payload contains non-finite values")
    return cube.astype(dtype.newbyteorder("="), copy=True)


# -- weight checkpoints -------------------------------------------------------

_CKPT_MAGIC = b"SSUW"
_CKPT_VERSION = 1


def _config_entries(cfg: ModelConfig):
    scheme_ids = [scan.ALL_SCHEMES.index(s) for s in cfg.scan_schemes]
    return [
        ("cfg.base_channels", np.array([cfg.base_channels], dtype="<f4")),
        ("cfg.channels", np.array(cfg.channels, dtype="<f4")),
        ("cfg.downsample_blocks", np.array(cfg.downsample_blocks, dtype="<f4")),
        ("cfg.res_blocks", np.array([cfg.res_blocks], dtype="<f4")),
        ("cfg.state_dim", np.array([cfg.state_dim], dtype="<f4")),
        ("cfg.scan_schemes", np.array(scheme_ids, dtype="<f4")),
        ("cfg.bidirectional", np.array([1.0 if cfg.bidirectional else 0.0], dtype="<f4")),
    ]


def checkpoint_bytes(mw: ModelWeights) -> bytes:
    entries = _config_entries(mw.config)
    entries += [(name, t.data.astype("<f4", copy=False)) for name, t in named_parameters(mw)]
    manifest = io.BytesIO()
    payload = io.BytesIO()
    manifest.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        nb = name.encode()
        manifest.write(struct.pack("<H", len(nb)))
        manifest.write(nb)
        manifest.write(struct.pack("<B", arr.ndim))
        manifest.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        manifest.write(struct.pack("<Q", payload.tell()))
        payload.write(np.ascontiguousarray(arr).tobytes())
    return _CKPT_MAGIC + struct.pack("<I", _CKPT_VERSION) + manifest.getvalue() + payload.getvalue()


def save_checkpoint(path, mw: ModelWeights) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(mw))


def _read_manifest(buf: io.BytesIO):
    (count,) = struct.unpack("<I", buf.read(4))
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack("<H", buf.read(2))
        name = buf.read(nlen).decode()
        (ndim,) = struct.unpack("<B", buf.read(1))
        shape = struct.unpack(f"<{ndim}I", buf.read(4 * ndim))
        (offset,) = struct.unpack("<Q", buf.read(8))
        entries.append((name, shape, offset))
    return entries


def load_checkpoint(path, dtype=np.float32) -> ModelWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a weight checkpoint (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != _CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    buf = io.BytesIO(blob[8:])
    entries = _read_manifest(buf)
    payload_start = 8 + buf.tell()

    arrays = {}
    for name, shape, offset in entries:
        n = int(np.prod(shape)) if shape else 1
        start = payload_start + offset
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=start).reshape(shape)
        arrays[name] = arr

    def cfg_vals(key):
        if key not in arrays:
            raise DataError(f"{path}: checkpoint missing '{key}'")
        return arrays[key]

    cfg = ModelConfig(
        base_channels=int(cfg_vals("cfg.base_channels")[0]),
        channels=tuple(int(v) for v in cfg_vals("cfg.channels")),
        downsample_blocks=tuple(int(v) for v in cfg_vals("cfg.downsample_blocks")),
        res_blocks=int(cfg_vals("cfg.res_blocks")[0]),
        state_dim=int(cfg_vals("cfg.state_dim")[0]),
        scan_schemes=tuple(scan.ALL_SCHEMES[int(v)] for v in cfg_vals("cfg.scan_schemes")),
        bidirectional=bool(cfg_vals("cfg.bidirectional")[0]),
    )
    mw = init_model(cfg, seed=0, dtype=dtype)
    for name, t in named_parameters(mw):
        if name not in arrays:
            raise DataError(f"{path}: checkpoint missing parameter '{name}'")
        arr = arrays[name]
        if tuple(arr.shape) != t.shape:
            raise DataError(f"{path}: shape mismatch for '{name}': {arr.shape} vs {t.shape}")
        t.data = np.ascontiguousarray(arr.astype(dtype))
    return mw


# -- flat key-value config ----------------------------------------------------


def parse_config_text(text: str) -> dict:
    """Parse 'section.key = value' lines into a flat dict of strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'section.key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise DataError(f"config line {lineno}: key {key!r} must be 'section.key'")
        if key in out:
            raise DataError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_config(values: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


# -- false-color PNG export ---------------------------------------------------


def export_false_color_png(path, cube: np.ndarray, bands) -> None:
    """Write an RGB PNG from three bands, each min-max stretched."""
    from PIL import Image

    if len(bands) != 3:
        raise DataError("exactly three band indices are required")
    planes = []
    for b in bands:
        if not 0 <= b < cube.shape[0]:
            raise DataError(f"band index {b} out of range for {cube.shape[0]} bands")
        plane = cube[b].astype(np.float64)
        lo, hi = plane.min(), plane.max()
        stretched = (plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane)
        planes.append(np.round(stretched * 255).astype(np.uint8))
    rgb = np.stack(planes, axis=-1)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
