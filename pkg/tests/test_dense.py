import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridir.dense import (EmbeddingStore, dense_search, dense_search_batch, load_embeddings, normalize,
                            save_embeddings, thread_count)
from hybridir.errors import FormatError, ValidationError


def _store(rows, ids=None):
    rows = np.asarray(rows, dtype=np.float32)
    return EmbeddingStore(tuple(ids or [f"d{i}" for i in range(len(rows))]), rows)


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    store = _store(rng.normal(size=(7, 5)), [f"dok-{c}" for c in "ąęłńóśź"])
    save_embeddings(store, tmp_path / "e.bin", tmp_path / "ids.jsonl")
    back = load_embeddings(tmp_path / "e.bin", tmp_path / "ids.jsonl")
    assert back.ids == store.ids
    assert back.matrix.tobytes() == store.matrix.tobytes()


def test_bare_string_ids_accepted(tmp_path):
    store = _store([[1.0, 0.0], [0.0, 1.0]])
    save_embeddings(store, tmp_path / "e.bin", tmp_path / "ids.jsonl")
    (tmp_path / "ids.jsonl").write_text('"a"\n"b"\n')
    assert load_embeddings(tmp_path / "e.bin", tmp_path / "ids.jsonl").ids == ("a", "b")


def test_nan_row_is_named(tmp_path):
    rows = np.ones((4, 3), dtype=np.float32)
    rows[2, 1] = np.nan
    with pytest.raises(ValidationError, match="row 2"):
        _store(rows)


@pytest.mark.parametrize("mutate", [
    lambda b: b"EMB2" + b[4:],
    lambda b: b[:-4],
    lambda b: b + b"\0\0\0\0",
    lambda b: b[:8],
])
def test_corrupt_files_rejected(tmp_path, mutate):
    save_embeddings(_store([[1.0, 2.0]]), tmp_path / "e.bin", tmp_path / "ids.jsonl")
    (tmp_path / "e.bin").write_bytes(mutate((tmp_path / "e.bin").read_bytes()))
    with pytest.raises(FormatError):
        load_embeddings(tmp_path / "e.bin", tmp_path / "ids.jsonl")


def test_id_count_mismatch(tmp_path):
    save_embeddings(_store([[1.0], [2.0]]), tmp_path / "e.bin", tmp_path / "ids.jsonl")
    (tmp_path / "ids.jsonl").write_text('"a"\n')
    with pytest.raises(ValidationError):
        load_embeddings(tmp_path / "e.bin", tmp_path / "ids.jsonl")


def test_header_layout(tmp_path):
    save_embeddings(_store([[1.0, 2.0, 3.0]]), tmp_path / "e.bin", tmp_path / "ids.jsonl")
    data = (tmp_path / "e.bin").read_bytes()
    assert data[:4] == b"EMB1" and struct.unpack_from("<II", data, 4) == (3, 1) and len(data) == 24


def test_normalize_and_zero_vector():
    unit = normalize(_store([[3.0, 4.0]]))
    np.testing.assert_allclose(unit.matrix[0], [0.6, 0.8], rtol=1e-7)
    with pytest.raises(ValidationError, match="zero norm"):
        normalize(_store([[1.0, 0.0], [0.0, 0.0]]))


def test_search_scores():
    store = normalize(_store([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    ranking = dense_search(store, [2.0, 0.0], 3)
    assert ranking[0] == ("d0", pytest.approx(1.0, abs=1e-6))
    assert dict(ranking)["d1"] == 0.0
    assert len(dense_search(store, [1.0, 0.0], 10)) == 3


def test_search_rejects_bad_input():
    store = _store([[1.0, 0.0]])
    with pytest.raises(ValidationError):
        dense_search(store, [1.0, 0.0], 1)
    unit = normalize(store)
    with pytest.raises(ValidationError):
        dense_search(unit, [0.0, 0.0], 1)
    with pytest.raises(ValidationError):
        dense_search(unit, [1.0, 0.0, 0.0], 1)
    with pytest.raises(ValueError):
        dense_search(unit, [1.0, 0.0], 0)


def test_brute_force_oracle_on_1000_vectors():
    rng = np.random.default_rng(42)
    rows = rng.normal(size=(1000, 16)).astype(np.float32)
    store = normalize(_store(rows))
    for _ in range(5):
        q = rng.normal(size=16)
        units = rows.astype(np.float64) / np.linalg.norm(rows.astype(np.float64), axis=1)[:, None]
        sims = units @ (q / np.linalg.norm(q))
        want = sorted(range(1000), key=lambda i: (-sims[i], f"d{i}"))[:10]
        got = dense_search(store, q, 10)
        assert [d for d, _ in got] == [f"d{i}" for i in want]
        np.testing.assert_allclose([s for _, s in got], sims[want], atol=1e-6)


@settings(max_examples=30)
@given(arrays(np.float64, (12, 4), elements=st.floats(-5, 5)), arrays(np.float64, 4, elements=st.floats(-5, 5)),
       st.integers(0, 2 ** 31))
def test_rotation_invariance(rows, q, seed):
    if (np.linalg.norm(rows, axis=1) < 1e-2).any() or np.linalg.norm(q) < 1e-2:
        return
    rot, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(4, 4)))
    a = dense_search(normalize(_store(rows)), q, 12)
    b = dense_search(normalize(_store(rows @ rot.T)), rot @ q, 12)
    np.testing.assert_allclose(sorted(s for _, s in a), sorted(s for _, s in b), atol=1e-5)


def test_batch_is_thread_deterministic(monkeypatch):
    rng = np.random.default_rng(1)
    store = normalize(_store(rng.normal(size=(200, 8))))
    queries = {f"q{i}": rng.normal(size=8) for i in range(40)}
    one = dense_search_batch(store, queries, 10, threads=1)
    four = dense_search_batch(store, queries, 10, threads=4)
    assert list(one) == list(four) == list(queries)
    for qid in queries:
        assert one[qid] == four[qid] == dense_search(store, queries[qid], 10)
    monkeypatch.setenv("HYBRIDIR_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("HYBRIDIR_THREADS", "many")
    with pytest.raises(ValueError):
        thread_count()
