"""Reference oracles and fixtures shared by the unit and acceptance tests."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from waml.graph import HeteroGraph, NodeType

C, P, S, A = NodeType.CUSTOMER, NodeType.PRODUCT, NodeType.SELLER, NodeType.CATEGORY


def brute_force_reduction(nodes, edges, threshold, candidates):
    """Direct set evaluation of the reduction definition.

    Returns (node set, edge set) with nodes as (raw, type) and edges as
    (tag, frozenset of raw ids).
    """
    products = [r for r, t in nodes if t == P]
    types = {}
    for r, t in nodes:
        types.setdefault(r, set()).add(t)
    bought = {}
    sp, ap = set(), set()
    for a, b, tag in edges:
        if tag == "CP":
            c, p = (a, b) if C in types[a] and P in types[b] else (b, a)
            bought.setdefault(c, set()).add(p)
        elif tag == "SP":
            sp.add((a, b) if S in types[a] and P in types[b] else (b, a))
        elif tag == "AP":
            ap.add((a, b) if A in types[a] and P in types[b] else (b, a))
    cands = set(candidates) & set(products)
    strong = set()
    for p, q in combinations(sorted(set(products)), 2):
        shared = sum(1 for basket in bought.values() if p in basket and q in basket)
        if shared >= threshold:
            strong.add((p, q))
    kept = {(p, q) for p, q in strong if p in cands or q in cands}
    training = cands | {x for e in kept for x in e}
    node_set = {(r, t) for r, t in nodes if t in (S, A) or (t == P and r in training)}
    edge_set = ({("PP", frozenset(e)) for e in kept}
                | {("SP", frozenset(e)) for e in sp if e[1] in training}
                | {("AP", frozenset(e)) for e in ap if e[1] in training})
    return node_set, edge_set


def graph_sets(g: HeteroGraph):
    nodes = set(zip(g.raw_ids, g.node_types))
    edges = {(tag, frozenset((g.raw_ids[a], g.raw_ids[b]))) for tag, arr in g.edge_sets.items() for a, b in arr}
    return nodes, edges


def random_instance(rng: np.random.Generator, max_nodes: int = 12, max_interactions: int = 30):
    """Small typed graph: at least one customer, product and seller."""
    n = int(rng.integers(4, max_nodes + 1))
    counts = rng.multinomial(n - 3, [0.35, 0.35, 0.15, 0.15]) + np.array([1, 2, 0, 0])
    counts[2] += 1
    names = {C: "c", P: "p", S: "s", A: "a"}
    nodes = [(f"{names[t]}{i}", t) for t, k in zip((C, P, S, A), counts) for i in range(k)]
    by_type = {t: [r for r, tt in nodes if tt == t] for t in (C, P, S, A)}
    edges = []
    for _ in range(int(rng.integers(0, max_interactions + 1))):
        choices = [tag for tag, t in (("CP", C), ("SP", S), ("AP", A)) if by_type[t]]
        tag = choices[int(rng.integers(len(choices)))]
        first = {"CP": C, "SP": S, "AP": A}[tag]
        a = by_type[first][int(rng.integers(len(by_type[first])))]
        b = by_type[P][int(rng.integers(len(by_type[P])))]
        edges.append((b, a, tag) if rng.random() < 0.2 else (a, b, tag))
    k = int(rng.integers(1, len(by_type[P]) + 1))
    candidates = list(rng.choice(by_type[P], size=k, replace=False))
    threshold = int(rng.integers(1, 4))
    return nodes, edges, threshold, candidates


def toy_graph():
    """Six customers, six products, three sellers, two categories; candidates p1, p2."""
    nodes = ([(f"c{i}", C) for i in range(1, 7)] + [(f"p{i}", P) for i in range(1, 7)]
             + [("s1", S), ("s2", S), ("s3", S), ("a1", A), ("a2", A)])
    baskets = {"c1": ["p1", "p3"], "c2": ["p1", "p3", "p4"], "c3": ["p2", "p5"],
               "c4": ["p2", "p5", "p6"], "c5": ["p4", "p6"], "c6": ["p4", "p6"]}
    edges = [(c, p, "CP") for c, items in baskets.items() for p in items]
    edges += [("s1", "p1", "SP"), ("s1", "p4", "SP"), ("s2", "p5", "SP"), ("s2", "p6", "SP"), ("s3", "p6", "SP")]
    edges += [("a1", "p1", "AP"), ("a1", "p3", "AP"), ("a1", "p4", "AP"), ("a2", "p6", "AP")]
    return nodes, edges, ["p1", "p2"]


def toy_expected():
    nodes = {("p1", P), ("p2", P), ("p3", P), ("p5", P), ("s1", S), ("s2", S), ("s3", S), ("a1", A), ("a2", A)}
    edges = {("PP", frozenset(("p1", "p3"))), ("PP", frozenset(("p2", "p5"))),
             ("SP", frozenset(("s1", "p1"))), ("SP", frozenset(("s2", "p5"))),
             ("AP", frozenset(("a1", "p1"))), ("AP", frozenset(("a1", "p3")))}
    return nodes, edges


def full_sort_topk(matrix, seller, candidates, k):
    """Sort every candidate by (-score, index) with Python's sort."""
    scored = [(-float(np.dot(matrix[c], matrix[seller])), int(c)) for c in set(int(x) for x in candidates)]
    return [c for _, c in sorted(scored)[:k]]


def numeric_grad(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f()
        x[idx] = orig - step
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2 * step)
    return g
