"""Binary containers: tensor files, checkpoints, and P6 PPM images.

All formats are little-endian with magic bytes and versions so
round-trips are bitwise lossless and portable. Writes go to a temp file
renamed into place on completion.
"""

from __future__ import annotations

import dataclasses
import io
import os
import struct
import tempfile

import numpy as np

from sfgsr.model import Model, ModelConfig, build_model, model_params
from sfgsr.tensor import ShapeError, UsageError

TENSOR_MAGIC = b"SFGT"
CHECKPOINT_MAGIC = b"SFGC"
VERSION = 1
_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAG_FOR = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class FormatError(UsageError):
    """Corrupt or unsupported file contents."""


def _atomic_write(path: str, payload: bytes):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- tensor files -----------------------------------------------------------------


def tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim and not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr)
    if arr.dtype not in _TAG_FOR:
        raise UsageError(f"tensor files hold f32/f64 only, got {arr.dtype}")
    head = TENSOR_MAGIC + struct.pack(
        "<BBBB", VERSION, _TAG_FOR[arr.dtype], arr.ndim, 0
    )
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return head + dims + le.tobytes()


def tensor_from_stream(f) -> np.ndarray:
    magic = f.read(4)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    version, tag, ndim, _ = struct.unpack("<BBBB", f.read(4))
    if version != VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    if tag not in _DTYPE_TAGS:
        raise FormatError(f"unknown dtype tag {tag}")
    dims = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
    dtype = _DTYPE_TAGS[tag]
    count = int(np.prod(dims)) if ndim else 1
    raw = f.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise FormatError("truncated tensor payload")
    return np.frombuffer(raw, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def write_tensor(path: str, arr: np.ndarray):
    _atomic_write(path, tensor_bytes(arr))


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        return tensor_from_stream(f)


# -- key=value config blocks ---------------------------------------------------------


def config_to_lines(config: ModelConfig) -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        out[f.name] = ",".join(str(x) for x in v) if isinstance(v, list) else str(v)
    return out


def config_from_lines(lines: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for f in dataclasses.fields(ModelConfig):
        if f.name not in lines:
            continue
        raw = lines[f.name]
        if f.name in ("depths", "heads"):
            kwargs[f.name] = [int(x) for x in raw.split(",") if x]
        elif f.type == "int":
            kwargs[f.name] = int(raw)
        elif f.type == "float":
            kwargs[f.name] = float(raw)
        else:
            kwargs[f.name] = raw
    return ModelConfig(**kwargs)


def _encode_block(lines: dict[str, str]) -> bytes:
    text = "".join(f"{k} = {v}\n" for k, v in sorted(lines.items()))
    return text.encode("utf-8")


def _decode_block(raw: bytes) -> dict[str, str]:
    out = {}
    for line in raw.decode("utf-8").splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_config_file(path: str) -> ModelConfig:
    """Read a `key = value` model config file."""
    with open(path, "rb") as f:
        return config_from_lines(_decode_block(f.read()))


# -- checkpoints -----------------------------------------------------------------------


def save_checkpoint(path: str, lines: dict[str, str], entries: dict[str, np.ndarray]):
    """Write a checkpoint: config block plus name-sorted tensor entries."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<B", VERSION))
    block = _encode_block(lines)
    buf.write(struct.pack("<I", len(block)))
    buf.write(block)
    names = sorted(entries)
    if len(names) != len(set(names)):
        raise UsageError("duplicate checkpoint entry names")
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(tensor_bytes(entries[name]))
    _atomic_write(path, buf.getvalue())


def load_checkpoint(path: str) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<B", f.read(1))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (blen,) = struct.unpack("<I", f.read(4))
        lines = _decode_block(f.read(blen))
        (count,) = struct.unpack("<I", f.read(4))
        entries = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            entries[name] = tensor_from_stream(f)
    return lines, entries


def save_model_checkpoint(
    path: str, model: Model, extra_lines: dict = None, extra_entries: dict = None
):
    lines = config_to_lines(model.config)
    if extra_lines:
        lines.update({k: str(v) for k, v in extra_lines.items()})
    entries = {f"param.{n}": t.data for n, t in model_params(model)}
    if extra_entries:
        entries.update(extra_entries)
    save_checkpoint(path, lines, entries)


def load_model_checkpoint(path: str) -> tuple[Model, dict[str, str], dict]:
    """Rebuild the model from the embedded config and load its weights.

    Unknown or missing parameter names are rejected with a full diff.
    Returns (model, config lines, non-parameter entries).
    """
    lines, entries = load_checkpoint(path)
    config = config_from_lines(lines)
    model = build_model(config)
    wanted = {f"param.{n}": t for n, t in model_params(model)}
    stored = {k: v for k, v in entries.items() if k.startswith("param.")}
    missing = sorted(set(wanted) - set(stored))
    unknown = sorted(set(stored) - set(wanted))
    if missing or unknown:
        raise FormatError(
            f"{path}: checkpoint/model parameter mismatch; "
            f"missing={missing} unknown={unknown}"
        )
    for name, t in wanted.items():
        arr = stored[name]
        if arr.shape != t.shape:
            raise ShapeError(f"{name}: stored {arr.shape} vs model {t.shape}")
        t.data = arr.astype(t.data.dtype, copy=True)
    extras = {k: v for k, v in entries.items() if not k.startswith("param.")}
    return model, lines, extras


def save_training_checkpoint(
    path, model, opt_state, step: int, data_counter: int, reg_counter: int
):
    extra_entries = {}
    for name, arr in opt_state.m.items():
        extra_entries[f"opt_m.{name}"] = arr
    for name, arr in opt_state.v.items():
        extra_entries[f"opt_v.{name}"] = arr
    save_model_checkpoint(
        path,
        model,
        extra_lines={
            "train_step": step,
            "opt_step": opt_state.step,
            "data_counter": data_counter,
            "reg_counter": reg_counter,
        },
        extra_entries=extra_entries,
    )


def load_training_checkpoint(path):
    """Returns (model, opt_state, step, data_counter, reg_counter)."""
    from sfgsr.trainer import OptimizerState

    model, lines, extras = load_model_checkpoint(path)
    m = {k[len("opt_m."):]: v.copy() for k, v in extras.items() if k.startswith("opt_m.")}
    v = {k[len("opt_v."):]: w.copy() for k, w in extras.items() if k.startswith("opt_v.")}
    state = OptimizerState(m=m, v=v, step=int(lines["opt_step"]))
    return (
        model,
        state,
        int(lines["train_step"]),
        int(lines["data_counter"]),
        int(lines["reg_counter"]),
    )


# -- images ------------------------------------------------------------------------------


def write_ppm(path: str, img: np.ndarray):
    """img: [3, H, W] floats in [0,1]; written as binary P6, maxval 255."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"write_ppm expects [3,H,W], got {img.shape}")
    q = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    h, w = img.shape[1], img.shape[2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    _atomic_write(path, header + q.transpose(1, 2, 0).tobytes())


def read_ppm(path: str) -> np.ndarray:
    """Returns [3, H, W] float32 in [0,1]."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise FormatError(f"{path}: not a P6 PPM")
    # header: magic, width, height, maxval; separated by whitespace/comments
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(x) for x in fields)
    except ValueError as e:
        raise FormatError(f"{path}: bad PPM header") from e
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    need = w * h * 3
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: truncated PPM payload")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return img.astype(np.float32) / 255.0


def write_image(path: str, img: np.ndarray):
    """PPM for 3-band images; tensor file plus `.bands` sidecar otherwise."""
    if img.shape[0] == 3:
        write_ppm(path, img)
    else:
        write_tensor(path, img.astype(np.float32))
        _atomic_write(path + ".bands", f"{img.shape[0]}\n".encode("ascii"))


def read_image(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic[:2] == b"P6":
        return read_ppm(path)
    if magic == TENSOR_MAGIC:
        return read_tensor(path).astype(np.float32)
    raise FormatError(f"{path}: unrecognized image format")
