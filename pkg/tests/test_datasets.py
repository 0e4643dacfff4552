import itertools

import numpy as np
import pytest

from pfm.datasets import (
    DEFAULT_ROTATION,
    PointCloud,
    SequenceDataset,
    arch_curve,
    decode_sequences,
    encode_sequences,
    gen_arch,
    gen_sequence_corpus,
    gen_swiss_roll,
    load_point_cloud,
    load_sequences,
    make_codec,
    save_point_cloud,
    save_sequences,
    split,
    split_indices,
    swiss_roll_surface,
)
from pfm.numerics import make_rng


def test_arch_formula():
    np.testing.assert_allclose(arch_curve(0.0), [0.0, 1.0])
    np.testing.assert_allclose(arch_curve(1.0), [1.0, 0.0], atol=1e-16)


def test_noise_free_arch_on_circle():
    y = gen_arch(1000, 0.0, make_rng(0)).x
    assert np.all(y[:, 1] >= 0)
    assert np.max(np.abs(np.linalg.norm(y, axis=1) - 1)) < 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_noisy_arch_residual(seed):
    y = gen_arch(500, 0.1, make_rng(seed)).x
    assert np.mean(np.abs(np.linalg.norm(y, axis=1) - 1)) < 0.15


def test_swiss_roll_parameterization():
    np.testing.assert_allclose(swiss_roll_surface(np.pi, 0.0), [-np.pi, 0.0, 0.0], atol=1e-15)


def test_rotation_preserves_norm():
    a = gen_swiss_roll(50, 0.0, None, make_rng(1))
    b = gen_swiss_roll(50, 0.0, DEFAULT_ROTATION, make_rng(1))
    np.testing.assert_allclose(np.linalg.norm(a.x, axis=1), np.linalg.norm(b.x, axis=1), rtol=1e-13)
    np.testing.assert_allclose(DEFAULT_ROTATION @ DEFAULT_ROTATION.T, np.eye(3), atol=1e-15)


def test_swiss_roll_on_surface_and_deterministic():
    pc = gen_swiss_roll(100, 0.0, None, make_rng(2))
    t = np.hypot(pc.x[:, 0], pc.x[:, 2])
    np.testing.assert_allclose(pc.x[:, 0], t * np.cos(t), atol=1e-12)
    assert pc.x.tobytes() == gen_swiss_roll(100, 0.0, None, make_rng(2)).x.tobytes()


def test_split_partition():
    tr, te = split_indices(10, 0.8, 3)
    assert (len(tr), len(te)) == (8, 2)
    assert sorted(np.r_[tr, te]) == list(range(10))
    a, b = split_indices(10, 0.8, 3)
    assert np.array_equal(a, tr) and np.array_equal(b, te)
    with pytest.raises(ValueError):
        split_indices(10, 1.0, 0)


def test_split_objects():
    ds = SequenceDataset(["A", "C", "D", "E"], ids=["a", "b", "c", "d"])
    tr, te = split(ds, 0.5, 0)
    assert sorted(tr.sequences + te.sequences) == ["A", "C", "D", "E"]
    pc = PointCloud(np.arange(8.0).reshape(4, 2))
    a, b = split(pc, 0.5, 0)
    assert a.n + b.n == 4


def test_pointcloud_rejects_nan():
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 1.0]]))


def test_sequence_dataset_validation():
    with pytest.raises(ValueError):
        SequenceDataset(["AXZ"])
    with pytest.raises(ValueError):
        SequenceDataset(["A" * 26])


def test_corpus_generator():
    ds = gen_sequence_corpus(50, make_rng(0))
    assert len(ds) == 50
    assert all(4 <= len(s) <= 10 and set(s) <= set("AKLE") for s in ds.sequences)


# --- codec ------------------------------------------------------------------------


@pytest.fixture
def codec():
    return make_codec("AKLE", 6, 4, make_rng(5))


def test_codec_round_trip_exhaustive(codec):
    seqs = ["".join(p) for n in range(4) for p in itertools.product("AKLE", repeat=n)]
    assert decode_sequences(codec, encode_sequences(codec, seqs)).sequences == seqs


def test_codec_round_trip_random():
    c = make_codec("ACDEFGHIKLMNPQRSTVWY", 25, 8, make_rng(1))
    rng = make_rng(2)
    seqs = ["".join(rng.choice(list(c.alphabet), size=rng.integers(0, 26))) for _ in range(100)]
    assert decode_sequences(c, encode_sequences(c, seqs)).sequences == seqs


@pytest.mark.parametrize("scale", [1.0, 0.01])
def test_codec_scale(scale):
    c = make_codec("AKLE", 10, 4, make_rng(3), scale)
    assert np.allclose(c.table[1:].std(), scale, rtol=0.6)
    seqs = ["".join(p) for n in range(3) for p in itertools.product("AKLE", repeat=n)] + ["AKLEAKLEAK"]
    assert decode_sequences(c, encode_sequences(c, seqs)).sequences == seqs
    with pytest.raises(ValueError, match="scale"):
        make_codec("AKLE", 4, 2, make_rng(0), 0.0)


def test_empty_sequence_is_zero_vector(codec):
    x = encode_sequences(codec, [""]).x
    np.testing.assert_array_equal(x, 0.0)
    assert decode_sequences(codec, np.zeros(24)).sequences == [""]


def test_single_mutation_changes_one_block(codec):
    x = encode_sequences(codec, ["AKLE", "AKKE"]).x.reshape(2, 6, 4)
    diff = np.any(x[0] != x[1], axis=1)
    assert diff.tolist() == [False, False, True, False, False, False]


def test_small_perturbation_keeps_decoding(codec):
    rng = make_rng(3)
    seqs = ["AKLE", "EEL", "KLAKLE"]
    x = encode_sequences(codec, seqs).x
    gap = codec.min_row_gap()
    # positional offsets shift residue rows but not pads; use a margin valid for both
    delta = rng.normal(size=x.shape)
    delta *= 0.2 * gap / np.linalg.norm(delta.reshape(3, 6, 4), axis=2).max()
    assert decode_sequences(codec, x + delta).sequences == seqs


def test_encode_rejects_unknown(codec):
    with pytest.raises(ValueError):
        encode_sequences(codec, ["AXE"])
    with pytest.raises(ValueError):
        decode_sequences(codec, np.zeros(5))


# --- files -------------------------------------------------------------------------


def test_point_cloud_csv_round_trip(tmp_path, rng):
    pc = PointCloud(rng.normal(size=(5, 3)), ids=[f"p{i}" for i in range(5)])
    save_point_cloud(tmp_path / "p.csv", pc)
    back = load_point_cloud(tmp_path / "p.csv")
    assert back.x.tobytes() == pc.x.tobytes() and back.ids == pc.ids
    (tmp_path / "q.csv").write_text("1,2\n3,4\n")
    np.testing.assert_array_equal(load_point_cloud(tmp_path / "q.csv").x, [[1, 2], [3, 4]])


def test_sequence_csv_round_trip(tmp_path):
    ds = SequenceDataset(["AK", "LEE"], np.array([0.5, 1.5]), ["a", "b"])
    save_sequences(tmp_path / "s.csv", ds)
    back = load_sequences(tmp_path / "s.csv")
    assert back.sequences == ds.sequences and back.ids == ds.ids
    np.testing.assert_array_equal(back.activity, ds.activity)
