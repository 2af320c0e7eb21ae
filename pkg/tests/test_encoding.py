import hashlib
import math

import numpy as np
import pytest

from localhealth.data import TweetRecord
from localhealth.encoding import (
    AggregatedVector,
    EmbeddingMatrix,
    EncoderSpec,
    aggregate,
    cell_digest,
    combine_categories,
    hash_encode,
    manifest_line,
    read_manifest,
    sample_tweets,
    write_manifest,
)

SPEC64 = EncoderSpec(kind="Hashing", dim=64)


def make_cell(n, bg="B1", year=2016, category="MH"):
    return [TweetRecord(f"{bg}-{i}", f"tok{i} filler", bg, year, category) for i in range(n)]


def test_encoder_spec_validation():
    EncoderSpec(kind="Hashing", dim=256)
    EncoderSpec(kind="ExternalFile", dim=768)  # non power of two allowed for files
    with pytest.raises(ValueError):
        EncoderSpec(kind="Hashing", dim=768)
    with pytest.raises(ValueError):
        EncoderSpec(kind="Hashing", dim=8)
    with pytest.raises(ValueError):
        EncoderSpec(kind="Hashing", dim=256, seq_len=63)
    with pytest.raises(ValueError):
        EncoderSpec(kind="Magic", dim=256)


def test_sample_keeps_all_below_cap():
    cell = make_cell(30)
    subset, manifest = sample_tweets(cell, cap=4000, seed=0)
    assert len(subset) == 30
    assert sorted(t.tweet_id for t in subset) == sorted(t.tweet_id for t in cell)
    assert manifest == [(t.tweet_id, t.text) for t in subset]
    # order is a seeded shuffle, not the input order
    other, _ = sample_tweets(cell, cap=4000, seed=1)
    assert [t.tweet_id for t in subset] != [t.tweet_id for t in other]
    again, _ = sample_tweets(cell, cap=4000, seed=0)
    assert [t.tweet_id for t in subset] == [t.tweet_id for t in again]


def test_sample_caps_large_cell():
    cell = make_cell(88_717)
    subset, manifest = sample_tweets(cell, cap=4000, seed=0)
    assert len(subset) == 4000
    assert len(manifest) == 4000
    assert len({t.tweet_id for t in subset}) == 4000  # without replacement


def test_sample_errors():
    with pytest.raises(ValueError):
        sample_tweets([], seed=0)
    mixed = make_cell(2) + make_cell(1, year=2017)
    with pytest.raises(ValueError):
        sample_tweets(mixed, seed=0)


def test_sample_inclusion_frequency_hypergeometric():
    cell = make_cell(10)
    hits = np.zeros(10)
    n_draws = 10_000
    for seed in range(n_draws):
        subset, _ = sample_tweets(cell, cap=5, seed=seed)
        for t in subset:
            hits[int(t.tweet_id.split("-")[1])] += 1
    freq = hits / n_draws
    sigma = math.sqrt(0.5 * 0.5 / n_draws)
    assert np.all(np.abs(freq - 0.5) < 3 * sigma + 1e-12)


def test_hash_encode_deterministic_and_normalized():
    v1 = hash_encode("Feeling tired of it all", SPEC64)
    v2 = hash_encode("Feeling tired of it all", SPEC64)
    assert np.array_equal(v1, v2)
    assert abs(np.linalg.norm(v1) - 1.0) < 1e-12
    assert v1.shape == (64,)


def test_hash_encode_case_and_order():
    assert np.array_equal(hash_encode("Hello World", SPEC64), hash_encode("hello world", SPEC64))
    assert np.array_equal(hash_encode("a b c", SPEC64), hash_encode("c a b", SPEC64))


def test_hash_encode_scaling_invariance():
    # duplicating a single token rescales the bag but not the direction
    assert np.allclose(hash_encode("t", SPEC64), hash_encode("t t", SPEC64), atol=1e-15)


def test_hash_encode_seq_len_truncation():
    spec = EncoderSpec(kind="Hashing", dim=64, seq_len=4)
    long_text = " ".join(f"w{i}" for i in range(10))
    head_text = " ".join(f"w{i}" for i in range(4))
    assert np.array_equal(hash_encode(long_text, spec), hash_encode(head_text, spec))


def test_hash_encode_hand_oracle():
    # independent re-derivation of the token -> (bucket, sign) mapping
    tokens = ["alpha", "beta", "gamma"]
    expected = np.zeros(64)
    for token in tokens:
        h = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
        expected[(h >> 1) % 64] += 1.0 if h & 1 else -1.0
    expected /= np.linalg.norm(expected)
    got = hash_encode("alpha beta gamma", SPEC64)
    assert np.allclose(got, expected, rtol=0, atol=1e-15)


def test_hash_encode_errors():
    with pytest.raises(ValueError):
        hash_encode("   ", SPEC64)
    with pytest.raises(ValueError):
        hash_encode("x", EncoderSpec(kind="ExternalFile", dim=64))


def test_aggregate_mean():
    key = ("B1", 2016, "MH")
    row = np.array([[1.0, 2.0, 3.0, 4.0]])
    assert np.array_equal(aggregate(EmbeddingMatrix(key, row)).v_bar, row[0])
    sym = EmbeddingMatrix(key, np.array([[1.0, -2.0], [-1.0, 2.0]]))
    assert np.array_equal(aggregate(sym).v_bar, np.zeros(2))

    rng = np.random.default_rng(0)
    rows = rng.normal(size=(100, 16))
    v_bar = aggregate(EmbeddingMatrix(key, rows)).v_bar
    independent = np.array([sum(rows[i][j] for i in range(100)) / 100.0 for j in range(16)])
    assert np.allclose(v_bar, independent, rtol=0, atol=1e-12)


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(1)
    rows = rng.normal(size=(40, 8))
    key = ("B1", 2016, "FI")
    base = aggregate(EmbeddingMatrix(key, rows)).v_bar
    shuffled = aggregate(EmbeddingMatrix(key, rows[rng.permutation(40)])).v_bar
    assert np.allclose(base, shuffled, atol=1e-15)


def test_combine_categories():
    rng = np.random.default_rng(2)
    a = AggregatedVector(("B1", 2016, "MH"), rng.normal(size=8))
    b = AggregatedVector(("B1", 2016, "FI"), rng.normal(size=8))
    zero = AggregatedVector(("B1", 2016, "FI"), np.zeros(8))
    assert np.array_equal(combine_categories(a, zero).v_bar, a.v_bar)
    ab, ba = combine_categories(a, b), combine_categories(b, a)
    assert np.array_equal(ab.v_bar, ba.v_bar)
    assert np.array_equal(ab.v_bar, np.array([a.v_bar[i] + b.v_bar[i] for i in range(8)]))
    assert ab.key == ("B1", 2016, "MH+FI")
    with pytest.raises(ValueError):
        combine_categories(a, AggregatedVector(("B1", 2016, "FI"), np.zeros(4)))
    with pytest.raises(ValueError):
        combine_categories(a, AggregatedVector(("B2", 2016, "FI"), np.zeros(8)))


def test_manifest_round_trip(tmp_path):
    cells = [
        (("B1", 2015, "MH"), [("t1", "hello world"), ("t2", "unicode ✓ text")]),
        (("B2", 2019, "General"), [("t3", "a b c")]),
    ]
    path = tmp_path / "m.jsonl"
    digests = write_manifest(path, cells)
    back_cells, back_digests = read_manifest(path)
    assert back_digests == digests
    assert back_cells[("B1", 2015, "MH")] == cells[0][1]
    assert back_cells[("B2", 2019, "General")] == cells[1][1]

    # digests are stable functions of the lines
    lines = [manifest_line("B1", 2015, "MH", t, x) for t, x in cells[0][1]]
    assert cell_digest(lines) == digests[("B1", 2015, "MH")]


def test_manifest_corruption_detected(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [(("B1", 2015, "MH"), [("t1", "hello")])])
    text = path.read_text("utf-8")
    path.write_text(text.replace("hello", "hacked"), "utf-8")
    with pytest.raises(ValueError, match="digest"):
        read_manifest(path)


def test_embedding_matrix_validation():
    with pytest.raises(ValueError):
        EmbeddingMatrix(("B", 2015, "MH"), np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        EmbeddingMatrix(("B", 2015, "MH"), np.zeros((0, 4)))
