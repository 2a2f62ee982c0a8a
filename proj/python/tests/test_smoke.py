import math
from pathlib import Path

import numpy as np
import pytest

import talkplay as tp

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"


def test_worked_example_and_round_trip():
    v = tp.Vocabulary(256, 1024)
    ids = v.encode_item([59, 361, 7, 98, 29])
    assert v.item_surface(ids) == "<|playlist-59|><|semantic-361|><|metadata-7|><|lyrics-98|><|audio-29|>"
    assert v.decode_item(ids) == [59, 361, 7, 98, 29]
    assert v.parse_item_surface(v.item_surface(ids)) == ids
    cold = v.encode_item([None, 1, 2, 3, 4])
    assert cold[0] == v.playlist_unk
    assert v.decode_item(cold)[0] is None


def test_layout():
    v = tp.Vocabulary(100, 4)
    assert (v.music_begin, v.music_end, v.som, v.eom) == (100, 120, 120, 121)
    assert v.size == 125
    assert v.music_token("semantic", 2) == 106
    assert v.token_surface(v.som) == "<start_of_music>"
    with pytest.raises(tp.InvalidArgument):
        v.music_token("video", 0)


def test_kmeans_two_blobs():
    rng = np.random.default_rng(0)
    truth = np.array([[-3.0, 1.0], [4.0, -2.0]], dtype=np.float32)
    data = np.concatenate([truth[0] + 0.3 * rng.standard_normal((500, 2)),
                           truth[1] + 0.3 * rng.standard_normal((500, 2))]).astype(np.float32)
    r = tp.fit_kmeans(data, k=2, seed=1)
    hist = r["inertia_history"]
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    for t in truth:
        assert np.min(np.linalg.norm(r["centroids"] - t, axis=1)) < 0.1
    for x in data[:50]:
        assert tp.assign(r["centroids"], x) == int(np.argmin(((r["centroids"] - x) ** 2).sum(axis=1)))


def test_retrieval_scores_and_ranking():
    v = tp.Vocabulary(256, 3)
    q = v.encode_item([0, 1, 2, 0, 1])
    assert tp.score_partial(v, q, q) == 55
    assert tp.score_partial(v, q, v.encode_item([0, 1, 0, 0, 0]), [1, 1, 1, 1, 1]) == 3
    assert [name for name, _ in tp.standard_profiles()] == [
        "uniform", "linear-f2c", "quadratic-f2c", "linear-c2f", "quadratic-c2f"]
    items = {"a": v.encode_item([0, 1, 2, 0, 1]), "b": v.encode_item([0, 1, 0, 0, 0]),
             "c": v.encode_item([2, 2, 2, 2, 2])}
    index = tp.TokenIndex(v, items, {"a": 1.0, "b": 5.0, "c": 9.0})
    ranked = index.recommend(q, top_n=10)
    assert [r["track_id"] for r in ranked] == ["a", "b", "c"]
    assert ranked[0]["matched"] == list(tp.MODALITIES)
    assert [r["track_id"] for r in index.recommend(q, exclude={"a"})] == ["b", "c"]


def test_metrics():
    assert tp.mrr([4]) == 0.25
    assert tp.mrr([1, None]) == 0.5
    assert tp.hit_at_k([1, 10, 11, None], 10) == 0.5
    with pytest.raises(tp.InvalidArgument):
        tp.mrr([])


def test_bm25_matches_reference_formula():
    docs = [("x", "A b"), ("y", "a, C c!"), ("z", "d")]
    index = tp.Bm25Index(docs)
    toks = [tp.bm25_tokenize(d) for _, d in docs]
    n, avg = len(toks), sum(map(len, toks)) / len(toks)

    def ref(query):
        out = []
        for doc in toks:
            s = 0.0
            for term in tp.bm25_tokenize(query):
                df = sum(term in d for d in toks)
                idf = math.log((n - df + 0.5) / (df + 0.5) + 1)
                f = doc.count(term)
                s += idf * f * 2.2 / (f + 1.2 * (0.25 + 0.75 * len(doc) / avg))
            out.append(s)
        return out

    for query in ["a c", "a a", "b d", "zzz"]:
        assert index.scores(query) == pytest.approx(ref(query), rel=1e-12)


def test_bm25_over_catalog_files():
    index = tp.Bm25Index.from_catalog(DATA / "catalog_small")
    assert len(index) == 5
    assert index.rank("cafe noir jazz", top_n=1)[0]["track_id"] == "t4"


def test_sampling():
    draws = tp.sample([0.5, 0.3, 0.2], n=10000, top_p=1.0, seed=3)
    p = np.exp([0.5, 0.3, 0.2])
    p /= p.sum()
    freq = np.bincount(draws, minlength=3) / len(draws)
    assert np.max(np.abs(freq - p)) < 0.02
    assert set(tp.sample([0.1, 2.0, 1.9], n=20, temperature=0.0)) == {1}
    assert tp.sample([1.0, 2.0], n=5, seed=9) == tp.sample([1.0, 2.0], n=5, seed=9)
    with pytest.raises(tp.InvalidArgument):
        tp.sample([1.0], top_p=0.0)


def test_seeds_are_stable():
    assert tp.stable_hash("") == 0xCBF29CE484222325
    assert tp.mix_seed(1, 2) == tp.mix_seed(1, 2) != tp.mix_seed(1, 3)
