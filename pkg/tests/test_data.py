import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aagan.data import (EARLIEST, LATEST, DatasetError, DatasetManifest, DimensionError, FeatureSequenceRecord,
                        MagicNumberError, ProtocolError, SplitSpec, SyntheticConfig, TruncatedPayloadError,
                        decode_dataset, encode_dataset, generate_synthetic_dataset, load_dataset,
                        nearest_centroid_accuracy, observed_length, resample_indices, resample_sequence,
                        save_dataset, sidecar_path, split_batch, split_observed_future)

SMALL = SyntheticConfig(num_classes=3, dim=4, train_per_class=4, test_per_class=2, length=12, seed=3)


@pytest.fixture(scope="module")
def small():
    return generate_synthetic_dataset(SMALL)


def record(rows, dim=2, rid="r", label=0):
    v = np.arange(rows * dim, dtype=np.float32).reshape(rows, dim)
    return FeatureSequenceRecord(rid, label, v, -v)


def test_generation_deterministic(small):
    again = generate_synthetic_dataset(SMALL)
    assert again == small
    assert encode_dataset(again) == encode_dataset(small)
    other = generate_synthetic_dataset(SyntheticConfig(**{**SMALL.__dict__, "seed": 4}))
    assert other != small


def test_noise_free_temporal_is_first_difference():
    m = generate_synthetic_dataset(SyntheticConfig(num_classes=2, dim=3, train_per_class=2, test_per_class=1,
                                                   length=10, noise=0.0))
    for r in m.records:
        assert np.array_equal(r.temporal[:-1], r.visual[1:] - r.visual[:-1])


def test_manifest_invariants(small):
    assert len({r.id for r in small.records}) == len(small.records)
    assert {r.label for r in small.records} == set(range(3))
    assert all(r.visual.dtype == np.float32 and r.visual.shape == r.temporal.shape == (12, 4) for r in small.records)
    assert len(small.subset("train")) == 12 and len(small.subset("test")) == 6


def test_centroid_oracle_beats_chance():
    m = generate_synthetic_dataset()  # default configuration
    acc = m.generation["centroid_oracle_accuracy"]
    assert acc > 1 / m.num_classes
    # recompute independently by brute force
    tr, te = m.subset("train"), m.subset("test")
    xtr = np.stack([np.concatenate([r.visual.ravel(), r.temporal.ravel()]) for r in tr]).astype(np.float64)
    xte = np.stack([np.concatenate([r.visual.ravel(), r.temporal.ravel()]) for r in te]).astype(np.float64)
    ytr = np.array([r.label for r in tr])
    hits = 0
    for x, r in zip(xte, te):
        best = min(range(m.num_classes), key=lambda k: float(((xtr[ytr == k].mean(0) - x) ** 2).sum()))
        hits += best == r.label
    assert hits / len(te) == acc


@pytest.mark.parametrize("bad", [dict(num_classes=1), dict(dim=1), dict(length=7), dict(noise=-1.0)])
def test_invalid_synthetic_config(bad):
    with pytest.raises(ValueError):
        generate_synthetic_dataset(SyntheticConfig(**{**SMALL.__dict__, **bad}))


def test_manifest_rejects_duplicates_and_bad_labels():
    with pytest.raises(DatasetError):
        DatasetManifest([record(3), record(3)], 2, 2)
    with pytest.raises(DatasetError):
        DatasetManifest([record(3, label=2)], 2, 2)
    with pytest.raises(DimensionError, match="r"):
        DatasetManifest([record(3, dim=3)], 2, 2)


def test_resample_examples():
    r = record(6)
    assert resample_sequence(r, 6) == r
    half = resample_sequence(r, 3)
    assert np.array_equal(half.visual, r.visual[[0, 2, 4]])
    up = resample_sequence(record(3), 6)
    # index map floor(j * 3 / 6)
    assert resample_indices(3, 6).tolist() == [j * 3 // 6 for j in range(6)] == [0, 0, 1, 1, 2, 2]
    assert np.array_equal(up.visual, record(3).visual[[0, 0, 1, 1, 2, 2]])
    assert np.array_equal(up.temporal, -up.visual)
    with pytest.raises(ValueError):
        resample_sequence(r, 1)


def test_split_earliest_protocol():
    s = split_observed_future(record(50), EARLIEST)
    assert s.observed_v.shape[0] == 10
    assert s.future_v[0].tolist() == record(50).visual[10].tolist()  # row 11, 1-based


def test_split_latest_with_horizon():
    s = split_observed_future(record(50), SplitSpec(0.5, 50, 10))
    assert s.observed_v.shape[0] == 25
    np.testing.assert_array_equal(s.future_v, record(50).visual[25:35])


@settings(max_examples=50, deadline=None)
@given(st.integers(8, 80), st.floats(0.05, 0.6), st.one_of(st.none(), st.integers(1, 20)))
def test_split_disjoint_contiguous(total, frac, horizon):
    r = record(total, dim=1)
    spec = SplitSpec(frac, None, horizon)
    T = observed_length(frac, total)
    H = T if horizon is None else horizon
    if T < 1 or T + H > total:
        with pytest.raises(ProtocolError, match=str(total)):
            split_observed_future(r, spec)
        return
    s = split_observed_future(r, spec)
    rows = np.concatenate([s.observed_v[:, 0], s.future_v[:, 0]])
    np.testing.assert_array_equal(rows, np.arange(T + H))


def test_split_protocol_error_names_lengths():
    with pytest.raises(ProtocolError, match="30 observed .* 30 future .* 50"):
        split_observed_future(record(50), SplitSpec(0.6, 50))


def test_split_batch_shapes(small):
    b = split_batch(small.records, SplitSpec(0.25, 12))
    assert b.observed_v.shape == (18, 3, 4) and b.future_tp.shape == (18, 3, 4)
    assert b.observed_v.dtype == np.float64
    sub = b.take([2, 0])
    assert sub.ids == [b.ids[2], b.ids[0]]


def test_round_trip(tmp_path, small):
    p = tmp_path / "d.aagn"
    save_dataset(small, p)
    back = load_dataset(p)
    assert back == small
    assert back.splits == small.splits
    assert back.generation == small.generation
    assert all(a.visual.tobytes() == b.visual.tobytes() for a, b in zip(small.records, back.records))


def test_corrupted_magic(tmp_path, small):
    p = tmp_path / "d.aagn"
    save_dataset(small, p)
    buf = bytearray(p.read_bytes())
    buf[1] ^= 0xFF
    p.write_bytes(bytes(buf))
    with pytest.raises(MagicNumberError):
        load_dataset(p)


def test_dimension_mismatch_names_record(tmp_path, small):
    p = tmp_path / "d.aagn"
    save_dataset(small, p)
    side = json.loads(sidecar_path(p).read_text())
    side["records"][4]["dim"] = 7
    sidecar_path(p).write_text(json.dumps(side))
    with pytest.raises(DimensionError, match=small.records[4].id):
        load_dataset(p)


def test_truncated_payload(tmp_path, small):
    buf = encode_dataset(small)
    with pytest.raises(TruncatedPayloadError):
        decode_dataset(buf[:-5])
    with pytest.raises(TruncatedPayloadError):
        decode_dataset(buf[:10])


def test_errors_are_distinct():
    assert len({MagicNumberError, TruncatedPayloadError, DimensionError}) == 3
    for e in (MagicNumberError, TruncatedPayloadError, DimensionError):
        assert not any(issubclass(e, o) for o in {MagicNumberError, TruncatedPayloadError, DimensionError} - {e})


def test_centroid_helper_perfect_on_separated():
    a = [record(2, rid=f"a{i}") for i in range(3)]
    b = [FeatureSequenceRecord(f"b{i}", 1, np.full((2, 2), 100, np.float32), np.zeros((2, 2), np.float32))
         for i in range(3)]
    assert nearest_centroid_accuracy(a + b, a + b) == 1.0
