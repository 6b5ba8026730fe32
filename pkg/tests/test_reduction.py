import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waml.graph import NodeType, WeightedEdge, graph_edge_list
from waml.reduction import (THRESHOLD_PRESETS, ReductionConfig, candidate_filter, project_copurchase,
                            reduce_pipeline, restrict_attached_edges, threshold_filter)

from helpers import brute_force_reduction, toy_expected, toy_graph, graph_sets, random_instance


def test_projection_counts_shared_customers():
    cp = [("c1", "p1"), ("c1", "p2"), ("c2", "p1"), ("c2", "p2"), ("c2", "p3")]
    pp = project_copurchase(cp)
    assert pp == [WeightedEdge("p1", "p2", 2), WeightedEdge("p1", "p3", 1), WeightedEdge("p2", "p3", 1)]


def test_projection_ignores_repeat_interactions():
    assert project_copurchase([("c1", "p1"), ("c1", "p1"), ("c1", "p2")]) == [WeightedEdge("p1", "p2", 1)]


def test_projection_degree_cap():
    cp = [("c1", "p1"), ("c1", "p2"), ("c1", "p3"), ("c2", "p1"), ("c2", "p2")]
    assert project_copurchase(cp, degree_cap=2) == [WeightedEdge("p1", "p2", 1)]


def test_single_item_customers_project_to_nothing():
    assert project_copurchase([("c1", "p1"), ("c2", "p2")]) == []


def test_threshold_filter_is_inclusive():
    pp = [WeightedEdge("a", "b", 1), WeightedEdge("a", "c", 2), WeightedEdge("b", "c", 3)]
    assert [e.count for e in threshold_filter(pp, 2)] == [2, 3]
    with pytest.raises(ValueError):
        threshold_filter(pp, 0)


def test_candidate_filter_and_training_set():
    pp = [WeightedEdge("p1", "p3", 2), WeightedEdge("p4", "p6", 2), WeightedEdge("p2", "p5", 3)]
    kept, training = candidate_filter(pp, ["p1", "p2", "p9"])
    assert [(e.u, e.v) for e in kept] == [("p1", "p3"), ("p2", "p5")]
    assert training == {"p1", "p2", "p3", "p5", "p9"}


def test_restrict_attached_edges():
    sp, ap = restrict_attached_edges([("s1", "p1"), ("s1", "p4")], [("a1", "p4"), ("a1", "p3")], {"p1", "p3"})
    assert sp == [("s1", "p1")] and ap == [("a1", "p3")]


def test_config_validation():
    with pytest.raises(ValueError):
        ReductionConfig(0, frozenset({"p"}))
    with pytest.raises(ValueError):
        ReductionConfig(2, frozenset())
    assert THRESHOLD_PRESETS["desk"] == 2


def test_toy_graph_reduces_to_expected_sets():
    nodes, edges, cands = toy_graph()
    g, report = reduce_pipeline(nodes, edges, ReductionConfig(2, frozenset(cands)))
    assert graph_sets(g) == toy_expected()
    assert report.counts["training_products"] == 4
    assert report.counts["customers_after"] == 0
    assert set(g.raw_ids[i] for i in g.candidates()) == {"p1", "p2"}


def test_no_customers_left_and_fewer_edges():
    nodes, edges, cands = toy_graph()
    g, report = reduce_pipeline(nodes, edges, ReductionConfig(2, frozenset(cands)))
    assert NodeType.CUSTOMER not in g.node_types
    assert g.num_edges < report.counts["customer_product_edges_before"]


def test_reduction_is_idempotent():
    nodes, edges, cands = toy_graph()
    cfg = ReductionConfig(2, frozenset(cands))
    g, _ = reduce_pipeline(nodes, edges, cfg)
    g2, _ = reduce_pipeline(list(zip(g.raw_ids, g.node_types)), graph_edge_list(g), cfg)
    assert g.same_as(g2)


def test_candidate_without_strong_edges_survives():
    nodes = [("c1", NodeType.CUSTOMER), ("p1", NodeType.PRODUCT), ("p2", NodeType.PRODUCT), ("s1", NodeType.SELLER)]
    edges = [("c1", "p1", "CP"), ("c1", "p2", "CP"), ("s1", "p1", "SP")]
    g, _ = reduce_pipeline(nodes, edges, ReductionConfig(5, frozenset({"p1"})))
    assert graph_sets(g) == ({("p1", NodeType.PRODUCT), ("s1", NodeType.SELLER)},
                             {("SP", frozenset(("s1", "p1")))})


def test_threshold_one_keeps_all_pairs_touching_candidates():
    nodes = [("c1", NodeType.CUSTOMER)] + [(f"p{i}", NodeType.PRODUCT) for i in range(4)]
    edges = [("c1", f"p{i}", "CP") for i in range(4)]
    g, _ = reduce_pipeline(nodes, edges, ReductionConfig(1, frozenset({"p0"})))
    assert len(g.edge_sets["PP"]) == 3


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_brute_force_oracle(seed):
    nodes, edges, threshold, cands = random_instance(np.random.default_rng(seed))
    g, _ = reduce_pipeline(nodes, edges, ReductionConfig(threshold, frozenset(cands)))
    assert graph_sets(g) == brute_force_reduction(nodes, edges, threshold, cands)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_candidates_subset_of_training_products(seed):
    nodes, edges, threshold, cands = random_instance(np.random.default_rng(seed))
    g, report = reduce_pipeline(nodes, edges, ReductionConfig(threshold, frozenset(cands)))
    products = {g.raw_ids[i] for i in g.nodes_of_type(NodeType.PRODUCT)}
    assert set(cands) <= products
    assert report.counts["product_product_edges_after"] <= report.counts["product_product_edges_thresholded"]
