"""Checkpoint container: bundle, optimiser states and schedule position.

Layout (little-endian)::

    b"AAGK" | version u32 | sha256(config) 32 bytes
    | meta_len u32 | meta JSON (config, architecture, position, optimiser scalars)
    | blob_count u32 | blobs | crc32 u32 of everything before it

    blob: name_len u32 | name utf-8 | ndim u32 | dims u32[ndim] | f64[prod(dims)]

Blobs are the model parameters in declaration order, then the discriminator
and generator optimiser moments (``opt_d.m/<name>``, ``opt_d.v/<name>``, ...).
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .model import ModelArch, ModelBundle
from .optim import AdamState

MAGIC = b"AAGK"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    bundle: ModelBundle
    opt_d: AdamState
    opt_g: AdamState
    config: TrainConfig
    position: int = 0


def _opt_meta(s: AdamState):
    return {"lr": s.lr, "decay": s.decay, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps, "step": s.step}


def encode_checkpoint(ck: Checkpoint) -> bytes:
    meta = {
        "config": ck.config.to_dict(),
        "arch": ck.bundle.arch.to_dict(),
        "position": ck.position,
        "opt_d": _opt_meta(ck.opt_d),
        "opt_g": _opt_meta(ck.opt_g),
    }
    meta_b = json.dumps(meta, sort_keys=True).encode()
    blobs = list(ck.bundle.params.items())
    for tag, s in (("opt_d", ck.opt_d), ("opt_g", ck.opt_g)):
        blobs += [(f"{tag}.m/{k}", a) for k, a in s.m.items()]
        blobs += [(f"{tag}.v/{k}", a) for k, a in s.v.items()]
    parts = [MAGIC, struct.pack("<I", VERSION), ck.config.hash(), struct.pack("<I", len(meta_b)), meta_b,
             struct.pack("<I", len(blobs))]
    for name, arr in blobs:
        nb = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim)
                     + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(ck: Checkpoint, path) -> None:
    """Write-then-rename, so an interrupted save never leaves a partial file at ``path``."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(encode_checkpoint(ck))
    os.replace(tmp, path)


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointCorruptError(f"bad checkpoint magic {bytes(buf[:4])!r}")
    pos = 4

    def read(n, what):
        nonlocal pos
        if pos + n > len(buf) - 4:
            raise CheckpointTruncatedError(f"checkpoint truncated while reading {what}")
        out = buf[pos:pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<I", read(4, "version"))
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, expected {VERSION}")
    try:
        ck = _decode_body(buf, read)
    except CheckpointTruncatedError:
        raise
    except (ValueError, KeyError, TypeError, UnicodeDecodeError, struct.error) as exc:
        raise CheckpointCorruptError(f"malformed checkpoint: {exc}") from exc
    if pos != len(buf) - 4:
        raise CheckpointCorruptError("trailing bytes after checkpoint blobs")
    (crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != crc:
        raise CheckpointCorruptError("checkpoint checksum mismatch")
    return ck


def _decode_body(buf, read) -> Checkpoint:
    chash = read(32, "config hash")
    (meta_len,) = struct.unpack("<I", read(4, "meta length"))
    meta = json.loads(read(meta_len, "meta").decode())
    config = TrainConfig.from_dict(meta["config"])
    if config.hash() != chash:
        raise CheckpointCorruptError("config hash does not match stored configuration")
    (count,) = struct.unpack("<I", read(4, "blob count"))
    blobs = {}
    for _ in range(count):
        (nl,) = struct.unpack("<I", read(4, "blob name length"))
        name = read(nl, "blob name").decode()
        (nd,) = struct.unpack("<I", read(4, f"{name} rank"))
        dims = struct.unpack(f"<{nd}I", read(4 * nd, f"{name} dims"))
        n = int(np.prod(dims)) if nd else 1
        blobs[name] = np.frombuffer(read(8 * n, f"{name} data"), dtype="<f8").reshape(dims).astype(np.float64)

    params, opts = {}, {"opt_d": AdamState(**meta["opt_d"]), "opt_g": AdamState(**meta["opt_g"])}
    for name, arr in blobs.items():
        head, sep, rest = name.partition("/")
        if sep and head.startswith("opt_"):
            tag, kind = head.split(".")
            getattr(opts[tag], kind)[rest] = arr
        else:
            params[name] = arr
    bundle = ModelBundle(ModelArch.from_dict(meta["arch"]), params)
    return Checkpoint(bundle, opts["opt_d"], opts["opt_g"], config, int(meta["position"]))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
