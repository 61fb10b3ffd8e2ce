"""Feature-sequence records, synthetic data, observed/future splitting and the dataset container.

Container layout (little-endian)::

    b"AAGN" | version u32 | K u32 | D u32 | count u64
    per record: id_len u32 | id utf-8 | label u32 | T_total u32
                | visual f32[T_total*D] | temporal f32[T_total*D]

A JSON sidecar (``<path>.json``) carries split assignments, the generation
config and a per-record shape index.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"AAGN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQ")


class DatasetError(ValueError):
    pass


class MagicNumberError(DatasetError):
    pass


class TruncatedPayloadError(DatasetError):
    pass


class DimensionError(DatasetError):
    pass


class ProtocolError(ValueError):
    """A record is too short for the requested observed/future split."""


@dataclass(eq=False)
class FeatureSequenceRecord:
    id: str
    label: int
    visual: np.ndarray  # (T_total, D) float32
    temporal: np.ndarray  # (T_total, D) float32

    def __post_init__(self):
        if self.visual.shape != self.temporal.shape or self.visual.ndim != 2:
            raise DimensionError(
                f"record {self.id!r}: visual {self.visual.shape} and temporal {self.temporal.shape} differ"
            )

    @property
    def length(self) -> int:
        return self.visual.shape[0]

    def __eq__(self, other):
        return (isinstance(other, FeatureSequenceRecord) and self.id == other.id
                and self.label == other.label
                and self.visual.dtype == other.visual.dtype
                and np.array_equal(self.visual, other.visual)
                and np.array_equal(self.temporal, other.temporal))


@dataclass(eq=False)
class DatasetManifest:
    records: list[FeatureSequenceRecord]
    num_classes: int
    dim: int
    splits: dict[str, str] = field(default_factory=dict)
    generation: dict | None = None

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DatasetError(f"duplicate record id {r.id!r}")
            seen.add(r.id)
            if not 0 <= r.label < self.num_classes:
                raise DatasetError(f"record {r.id!r}: label {r.label} outside [0, {self.num_classes})")
            if r.visual.shape[1] != self.dim:
                raise DimensionError(f"record {r.id!r}: feature dim {r.visual.shape[1]} != {self.dim}")

    def subset(self, split: str) -> list[FeatureSequenceRecord]:
        return [r for r in self.records if self.splits.get(r.id) == split]

    def __eq__(self, other):
        return (isinstance(other, DatasetManifest) and self.num_classes == other.num_classes
                and self.dim == other.dim and self.splits == other.splits
                and self.generation == other.generation and self.records == other.records)


@dataclass(frozen=True)
class SplitSpec:
    observed_fraction: float = 0.2
    resample_len: int | None = 50
    horizon: int | None = None  # None: same as the observed length


EARLIEST = SplitSpec(0.2)
LATEST = SplitSpec(0.5)
SETTINGS = {"earliest": EARLIEST, "latest": LATEST}


@dataclass(frozen=True)
class SyntheticConfig:
    num_classes: int = 4
    dim: int = 32
    train_per_class: int = 100
    test_per_class: int = 50
    length: int = 50
    noise: float = 0.5
    class_sep: float = 0.5
    process_noise: float = 0.05
    spectral_radius: float = 0.9
    seed: int = 0


def nearest_centroid_accuracy(train, test) -> float:
    """Accuracy of a nearest-centroid classifier on flattened full sequences."""
    def flat(rs):
        return np.stack([np.concatenate([r.visual.ravel(), r.temporal.ravel()]) for r in rs]).astype(np.float64)

    xtr, ytr = flat(train), np.array([r.label for r in train])
    xte, yte = flat(test), np.array([r.label for r in test])
    classes = np.unique(ytr)
    cents = np.stack([xtr[ytr == k].mean(axis=0) for k in classes])
    d = ((xte[:, None, :] - cents[None]) ** 2).sum(axis=-1)
    return float(np.mean(classes[np.argmin(d, axis=1)] == yte))


def generate_synthetic_dataset(cfg: SyntheticConfig = SyntheticConfig()) -> DatasetManifest:
    """One seeded stable linear system per class.

    Class ``k`` relaxes towards a fixed point ``c_k`` through a scaled random
    rotation ``A_k``: ``x_{t+1} = c_k + A_k (x_t - c_k) + process noise``.
    Visual rows are ``x_t`` plus observation noise; temporal rows are the
    first differences ``x_{t+1} - x_t`` plus noise.
    """
    if cfg.num_classes < 2 or cfg.dim < 2 or cfg.length < 8:
        raise ValueError(f"invalid synthetic config: {cfg}")
    if cfg.train_per_class < 1 or cfg.test_per_class < 0 or cfg.noise < 0:
        raise ValueError(f"invalid synthetic config: {cfg}")
    rng = np.random.default_rng(cfg.seed)
    K, D, L = cfg.num_classes, cfg.dim, cfg.length
    systems = []
    for _ in range(K):
        q, r = np.linalg.qr(rng.standard_normal((D, D)))
        q = q * np.sign(np.diag(r))
        centre = cfg.class_sep * rng.standard_normal(D)
        start = cfg.class_sep * rng.standard_normal(D)
        systems.append((cfg.spectral_radius * q, centre, start))

    records, splits = [], {}
    n_per = cfg.train_per_class + cfg.test_per_class
    for k, (A, centre, start) in enumerate(systems):
        for j in range(n_per):
            x = np.empty((L + 1, D))
            x[0] = centre + start + 0.3 * cfg.class_sep * rng.standard_normal(D)
            for t in range(L):
                x[t + 1] = centre + A @ (x[t] - centre) + cfg.process_noise * rng.standard_normal(D)
            obs = (x + cfg.noise * rng.standard_normal(x.shape)).astype(np.float32) if cfg.noise else x.astype(np.float32)
            if cfg.noise:
                diffs = (x[1:] - x[:-1] + cfg.noise * rng.standard_normal((L, D))).astype(np.float32)
            else:
                diffs = obs[1:] - obs[:-1]
            rid = f"c{k}_{j:04d}"
            records.append(FeatureSequenceRecord(rid, k, obs[:L].copy(), diffs))
            splits[rid] = "train" if j < cfg.train_per_class else "test"
    man = DatasetManifest(records, K, D, splits, None)
    gen = {"synthetic": asdict(cfg)}
    if cfg.test_per_class > 0:
        gen["centroid_oracle_accuracy"] = nearest_centroid_accuracy(man.subset("train"), man.subset("test"))
    man.generation = gen
    return man


# ---------------------------------------------------------------- protocol


def resample_indices(length: int, target_len: int) -> np.ndarray:
    """Nearest-index map ``floor(j * length / target_len)``."""
    return (np.arange(target_len) * length) // target_len


def resample_sequence(record: FeatureSequenceRecord, target_len: int) -> FeatureSequenceRecord:
    if record.length == 0:
        raise ProtocolError(f"record {record.id!r} is empty")
    if target_len < 2:
        raise ValueError(f"target length must be >= 2, got {target_len}")
    if target_len == record.length:
        return record
    idx = resample_indices(record.length, target_len)
    return FeatureSequenceRecord(record.id, record.label, record.visual[idx], record.temporal[idx])


def observed_length(fraction: float, total: int) -> int:
    """``round(fraction * total)`` with halves rounded up."""
    return int(math.floor(fraction * total + 0.5))


@dataclass
class SplitSample:
    observed_v: np.ndarray
    observed_tp: np.ndarray
    future_v: np.ndarray
    future_tp: np.ndarray
    label: int


def split_observed_future(record: FeatureSequenceRecord, spec: SplitSpec) -> SplitSample:
    """Rows ``1..T`` are observed, rows ``T+1..T+horizon`` are the future targets."""
    if not 0.0 < spec.observed_fraction < 1.0:
        raise ValueError(f"observed fraction must lie in (0, 1), got {spec.observed_fraction}")
    if spec.resample_len is not None:
        record = resample_sequence(record, spec.resample_len)
    total = record.length
    T = observed_length(spec.observed_fraction, total)
    horizon = T if spec.horizon is None else spec.horizon
    if T < 1 or horizon < 1 or T + horizon > total:
        raise ProtocolError(
            f"record {record.id!r}: split needs {T} observed + {horizon} future rows, only {total} available"
        )
    v = record.visual.astype(np.float64)
    tp = record.temporal.astype(np.float64)
    return SplitSample(v[:T], tp[:T], v[T:T + horizon], tp[T:T + horizon], record.label)


@dataclass
class SplitBatch:
    ids: list[str]
    observed_v: np.ndarray  # (N, T, D)
    observed_tp: np.ndarray
    future_v: np.ndarray  # (N, horizon, D)
    future_tp: np.ndarray
    labels: np.ndarray  # (N,)

    def __len__(self):
        return len(self.ids)

    def take(self, idx) -> "SplitBatch":
        idx = np.asarray(idx)
        return SplitBatch([self.ids[i] for i in idx], self.observed_v[idx], self.observed_tp[idx],
                          self.future_v[idx], self.future_tp[idx], self.labels[idx])


def split_batch(records, spec: SplitSpec) -> SplitBatch:
    samples = [split_observed_future(r, spec) for r in records]
    if not samples:
        raise ProtocolError("no records to split")
    return SplitBatch(
        [r.id for r in records],
        np.stack([s.observed_v for s in samples]),
        np.stack([s.observed_tp for s in samples]),
        np.stack([s.future_v for s in samples]),
        np.stack([s.future_tp for s in samples]),
        np.array([s.label for s in samples], dtype=np.int64),
    )


# ---------------------------------------------------------------- container


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def encode_dataset(manifest: DatasetManifest) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, manifest.num_classes, manifest.dim, len(manifest.records))]
    for r in manifest.records:
        if r.visual.shape[1] != manifest.dim:
            raise DimensionError(f"record {r.id!r}: feature dim {r.visual.shape[1]} != {manifest.dim}")
        rid = r.id.encode("utf-8")
        parts.append(struct.pack("<I", len(rid)))
        parts.append(rid)
        parts.append(struct.pack("<II", r.label, r.length))
        parts.append(np.ascontiguousarray(r.visual, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(r.temporal, dtype="<f4").tobytes())
    return b"".join(parts)


def save_dataset(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    _atomic_write(path, encode_dataset(manifest))
    side = {
        "version": VERSION,
        "splits": manifest.splits,
        "generation": manifest.generation,
        "records": [{"id": r.id, "rows": r.length, "dim": int(r.visual.shape[1])} for r in manifest.records],
    }
    _atomic_write(sidecar_path(path), json.dumps(side, indent=1, sort_keys=True).encode())


def decode_dataset(buf: bytes, shapes: dict | None = None) -> DatasetManifest:
    pos = 0

    def read(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise TruncatedPayloadError(f"truncated payload while reading {what} at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    if len(buf) < 4 or buf[:4] != MAGIC:
        raise MagicNumberError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    magic, version, K, D, count = _HEADER.unpack(read(_HEADER.size, "header"))
    if version != VERSION:
        raise DatasetError(f"unsupported container version {version}")
    records = []
    for n in range(count):
        (id_len,) = struct.unpack("<I", read(4, f"record {n} id length"))
        rid = read(id_len, f"record {n} id").decode("utf-8")
        label, rows = struct.unpack("<II", read(8, f"record {rid!r} header"))
        if shapes is not None and rid in shapes and shapes[rid].get("dim", D) != D:
            raise DimensionError(f"record {rid!r}: dim {shapes[rid]['dim']} disagrees with header D={D}")
        nbytes = rows * D * 4
        vis = np.frombuffer(read(nbytes, f"record {rid!r} visual payload"), dtype="<f4").reshape(rows, D)
        tmp = np.frombuffer(read(nbytes, f"record {rid!r} temporal payload"), dtype="<f4").reshape(rows, D)
        records.append(FeatureSequenceRecord(rid, label, vis.astype(np.float32), tmp.astype(np.float32)))
    if pos != len(buf):
        raise DimensionError(f"{len(buf) - pos} trailing bytes after {count} records; payload sizes inconsistent with D={D}")
    return DatasetManifest(records, K, D)


def load_dataset(path) -> DatasetManifest:
    path = Path(path)
    buf = path.read_bytes()
    side_file = sidecar_path(path)
    side = json.loads(side_file.read_text()) if side_file.exists() else {}
    shapes = {r["id"]: r for r in side.get("records", [])} or None
    man = decode_dataset(buf, shapes)
    man.splits = dict(side.get("splits", {}))
    man.generation = side.get("generation")
    return man
