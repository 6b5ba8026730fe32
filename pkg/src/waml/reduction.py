"""Shrink a customer/product/seller/category interaction graph to a product graph.

The pipeline projects customers out into weighted product-product edges,
drops rare pairs, keeps only pairs touching the candidate set, and
restricts seller and category edges to the surviving products.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

from .graph import HeteroGraph, NodeType, WeightedEdge, build_graph

Pair = tuple[str, str]


@dataclass(frozen=True)
class ReductionConfig:
    cooccurrence_threshold: int
    candidate_set: frozenset[str]
    # Customers with more distinct products than this are skipped during
    # projection; None keeps every customer.
    customer_degree_cap: int | None = None

    def __post_init__(self):
        if self.cooccurrence_threshold < 1:
            raise ValueError("cooccurrence_threshold must be >= 1")
        if not self.candidate_set:
            raise ValueError("candidate_set must be non-empty")
        object.__setattr__(self, "candidate_set", frozenset(self.candidate_set))


# Presets for the two production thresholds quoted for the original system.
THRESHOLD_PRESETS = {"desk": 2, "production-200": 200, "production-500": 500}


@dataclass
class ReductionReport:
    counts: dict[str, int]

    def ratio(self, before: str, after: str) -> float:
        return self.counts[before] / self.counts[after] if self.counts[after] else float("inf")

    def as_flat(self) -> dict[str, int]:
        return dict(self.counts)


def project_copurchase(customer_product_edges: Iterable[Pair], degree_cap: int | None = None) -> list[WeightedEdge]:
    """Replace customers by product-product edges weighted by shared customers.

    A repeated (customer, product) interaction counts once.
    """
    baskets: dict[str, set[str]] = defaultdict(set)
    for c, p in customer_product_edges:
        baskets[c].add(p)
    counts: Counter[Pair] = Counter()
    for c in sorted(baskets):
        items = sorted(baskets[c])
        if degree_cap is not None and len(items) > degree_cap:
            continue
        counts.update(combinations(items, 2))
    return [WeightedEdge(u, v, n) for (u, v), n in sorted(counts.items())]


def threshold_filter(pp: Iterable[WeightedEdge], t: int) -> list[WeightedEdge]:
    if t < 1:
        raise ValueError("threshold must be >= 1")
    return [e for e in pp if e.count >= t]


def candidate_filter(pp: Iterable[WeightedEdge], candidates: Iterable[str]) -> tuple[list[WeightedEdge], set[str]]:
    """Keep edges touching a candidate; return them and the training product set."""
    cand = set(candidates)
    kept = [e for e in pp if e.u in cand or e.v in cand]
    training = set(cand)
    for e in kept:
        training.add(e.u)
        training.add(e.v)
    return kept, training


def restrict_attached_edges(seller_product: Iterable[Pair], category_product: Iterable[Pair],
                            training_products: set[str]) -> tuple[list[Pair], list[Pair]]:
    sp = [(s, p) for s, p in seller_product if p in training_products]
    ap = [(a, p) for a, p in category_product if p in training_products]
    return sp, ap


def _split_edges(nodes: Sequence[tuple[str, NodeType]], edges: Iterable[tuple[str, str, str]]):
    """Sort raw edges into typed lists with canonical endpoint order."""
    types: dict[str, set[NodeType]] = defaultdict(set)
    for raw, t in nodes:
        types[raw].add(NodeType(t))

    def orient(a, b, first: NodeType):
        # Endpoints may come reversed; the first endpoint must carry ``first``.
        if first in types.get(a, ()) and NodeType.PRODUCT in types.get(b, ()):
            return a, b
        return b, a

    cp, sp, ap, pp = [], [], [], []
    for a, b, tag in edges:
        if tag == "CP":
            cp.append(orient(a, b, NodeType.CUSTOMER))
        elif tag == "SP":
            sp.append(orient(a, b, NodeType.SELLER))
        elif tag == "AP":
            ap.append(orient(a, b, NodeType.CATEGORY))
        elif tag == "PP":
            pp.append((min(a, b), max(a, b)))
        else:
            raise ValueError(f"unknown edge type {tag!r}")
    return cp, sp, ap, pp


def reduce_pipeline(nodes: Sequence[tuple[str, NodeType]], edges: Iterable[tuple[str, str, str]],
                    config: ReductionConfig) -> tuple[HeteroGraph, ReductionReport]:
    """Run projection, thresholding, candidate filtering and edge restriction.

    Product-product edges already present in the input are treated as
    aggregated and bypass the threshold, which makes the pipeline idempotent
    on its own output.
    """
    nodes = [(raw, NodeType(t)) for raw, t in nodes]
    edges = list(edges)
    cp, sp, ap, given_pp = _split_edges(nodes, edges)

    projected = project_copurchase(cp, config.customer_degree_cap)
    strong = threshold_filter(projected, config.cooccurrence_threshold)
    strong_keys = {(e.u, e.v) for e in strong}
    # Pre-aggregated edges count as passing the threshold.
    for u, v in sorted(set(given_pp)):
        if (u, v) not in strong_keys:
            strong.append(WeightedEdge(u, v, config.cooccurrence_threshold))
    strong.sort(key=lambda e: (e.u, e.v))

    product_ids = [raw for raw, t in nodes if t == NodeType.PRODUCT]
    product_set = set(product_ids)
    candidates = config.candidate_set & product_set
    kept_pp, training = candidate_filter(strong, candidates)
    sp_kept, ap_kept = restrict_attached_edges(sp, ap, training)

    final_nodes = [(raw, t) for raw, t in nodes
                   if t in (NodeType.SELLER, NodeType.CATEGORY) or (t == NodeType.PRODUCT and raw in training)]
    final_edges = ([(e.u, e.v, "PP") for e in kept_pp]
                   + [(s, p, "SP") for s, p in sp_kept]
                   + [(a, p, "AP") for a, p in ap_kept])
    graph = build_graph(final_nodes, final_edges, candidates)

    n_type = Counter(t for _, t in nodes)
    report = ReductionReport({
        "customers_before": n_type[NodeType.CUSTOMER],
        "customers_after": 0,
        "sellers": n_type[NodeType.SELLER],
        "categories": n_type[NodeType.CATEGORY],
        "products_before": n_type[NodeType.PRODUCT],
        "products_after": len(training),
        "candidate_products": len(candidates),
        "training_products": len(training),
        "customer_product_edges_before": len(set(cp)),
        "customer_product_edges_after": 0,
        "product_product_edges_unfiltered": len(projected) + len(set(given_pp) - {(e.u, e.v) for e in projected}),
        "product_product_edges_thresholded": len(strong),
        "product_product_edges_after": len(kept_pp),
        "seller_product_edges_before": len(set(sp)),
        "seller_product_edges_after": len(set(sp_kept)),
        "seller_candidate_edges": len({(s, p) for s, p in sp_kept if p in candidates}),
        "category_product_edges_before": len(set(ap)),
        "category_product_edges_after": len(set(ap_kept)),
        "final_nodes": graph.num_nodes,
        "final_edges": graph.num_edges,
    })
    return graph, report
