import numpy as np
import pytest

from waml.features import (ContentTable, FeatureConfig, content_from_texts, hash_embed, init_h0, load_content,
                           read_embeddings, text_stub_embed, write_embeddings)
from waml.graph import NodeType, build_graph

S, P = NodeType.SELLER, NodeType.PRODUCT


def test_hash_embed_is_deterministic_unit_sign_vector():
    v = hash_embed("seller-42", 64, seed=7)
    assert np.array_equal(v, hash_embed("seller-42", 64, seed=7))
    assert set(np.round(v * 8, 12)) <= {-1.0, 1.0}
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_hash_embed_depends_on_key_and_seed():
    assert not np.array_equal(hash_embed("a", 64), hash_embed("b", 64))
    assert not np.array_equal(hash_embed("a", 64, 0), hash_embed("a", 64, 1))


def test_hash_embed_odd_dimension():
    assert hash_embed("x", 13).shape == (13,)


def test_hash_embeds_nearly_orthogonal():
    vs = np.stack([hash_embed(f"k{i}", 256) for i in range(50)])
    gram = vs @ vs.T
    off = gram[~np.eye(50, dtype=bool)]
    assert np.abs(off).max() < 0.35
    assert abs(off.mean()) < 0.02


def test_text_stub():
    v = text_stub_embed("Red Cotton shirt", 32)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert np.array_equal(v, text_stub_embed("red  cotton SHIRT", 32))
    assert np.array_equal(text_stub_embed("", 32), np.zeros(32))
    shared = text_stub_embed("red cotton shirt", 32) @ text_stub_embed("blue cotton shirt", 32)
    other = text_stub_embed("red cotton shirt", 32) @ text_stub_embed("steel kettle lid", 32)
    assert shared > other


def graph():
    return build_graph([("s1", S), ("p1", P), ("p2", P)], [("s1", "p1", "SP")])


def test_init_h0_composition():
    g = graph()
    d = 16
    content = ContentTable(d, {"p1": np.ones(d)})
    h0 = init_h0(g, FeatureConfig(dim=d, content_source="precomputed-file"), content, dtype=np.float64).data
    np.testing.assert_allclose(h0[0], hash_embed("s1", d) + hash_embed("Seller", d))
    np.testing.assert_allclose(h0[1], hash_embed("p1", d) + hash_embed("Product", d) + 1.0)
    np.testing.assert_allclose(h0[2], hash_embed("p2", d) + hash_embed("Product", d))


def test_init_h0_switches():
    g = graph()
    content = ContentTable(8, {"p1": np.ones(8)})
    zero = init_h0(g, FeatureConfig(dim=8, content_source="zeros", use_id_hash=False, use_type_hash=False), content)
    assert not zero.data.any()
    only_type = init_h0(g, FeatureConfig(dim=8, content_source="zeros", use_id_hash=False), None)
    assert np.array_equal(only_type.data[1], only_type.data[2])


def test_content_only_for_products():
    table = ContentTable(4, {"s1": np.ones(4)})
    assert table.lookup("s1", S) is None


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        init_h0(graph(), FeatureConfig(dim=8), ContentTable(4, {}))
    with pytest.raises(ValueError):
        ContentTable(4, {"p": np.ones(3)})
    with pytest.raises(ValueError):
        FeatureConfig(content_source="bert")


def test_embedding_file_roundtrip(tmp_path):
    vecs = {"p1": np.arange(4.0), "pé": -np.ones(4)}
    write_embeddings(tmp_path / "c.emb", vecs.items(), 4)
    d, back = read_embeddings(tmp_path / "c.emb")
    assert d == 4 and set(back) == set(vecs)
    np.testing.assert_allclose(back["pé"], -1.0)
    assert load_content(tmp_path / "c.emb", 4).vectors.keys() == vecs.keys()
    with pytest.raises(ValueError):
        load_content(tmp_path / "c.emb", 8)


def test_embedding_file_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"WRONGMAG\x00\x00\x00\x00")
    with pytest.raises(ValueError):
        read_embeddings(tmp_path / "x")


def test_content_from_texts():
    table = content_from_texts({"p1": "a b", "p2": ""}, 8)
    assert np.array_equal(table.vectors["p2"], np.zeros(8))


def test_single_token_text_is_its_hash():
    np.testing.assert_allclose(text_stub_embed("kettle", 32), hash_embed("kettle", 32))


def test_random_key_pairs_nearly_orthogonal():
    d = 256
    dots = [abs(hash_embed(f"a{i}", d) @ hash_embed(f"b{i}", d)) for i in range(1000)]
    assert np.mean(dots) < 3 / np.sqrt(d)


def test_shared_tokens_raise_similarity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        base = [f"t{x}" for x in rng.integers(0, 10**6, 10)]
        near = base[:9] + ["zz"]
        far = [f"u{x}" for x in rng.integers(0, 10**6, 10)]
        a = text_stub_embed(" ".join(base), 64)
        assert a @ text_stub_embed(" ".join(near), 64) > a @ text_stub_embed(" ".join(far), 64)


def test_distinct_sellers_get_distinct_rows_and_h0_is_pure():
    g = build_graph([("s1", S), ("s2", S)], [])
    cfg = FeatureConfig(dim=16)
    a, b = init_h0(g, cfg), init_h0(g, cfg)
    assert not np.array_equal(a.data[0], a.data[1])
    assert np.array_equal(a.data, b.data)
