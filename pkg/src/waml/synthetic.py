"""Seeded marketplace graphs with planted seller/product clusters.

Candidate products receive seller interactions following a cold-start
profile (no interactions / at most 3 / 4 to 9); held-out ground truth is
every same-cluster (seller, candidate) pair that was not emitted as an edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import text_stub_embed, write_embeddings
from .graph import NodeType, read_edges, read_id_list, read_nodes, write_edges, write_nodes

# Share of candidates with 0, 1-3 and 4-9 seller interactions.
TARGET_PROFILE = (0.142, 0.479, 0.378)
BUCKET_RANGES = ((0, 0), (1, 3), (4, 9))


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_clusters: int = 8
    sellers_per_cluster: int = 25
    products_per_cluster: int = 120
    n_candidates: int = 500
    n_customers: int = 3000
    items_per_customer: tuple[int, int] = (3, 7)
    profile: tuple[float, float, float] = TARGET_PROFILE
    warm_seller_edges: tuple[int, int] = (1, 6)
    n_categories: int = 4
    vocab_per_cluster: int = 30
    shared_vocab: int = 300
    tokens_per_product: int = 12
    shared_token_rate: float = 0.6
    popularity_exponent: float = 0.6
    noise_rate: float = 0.3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "profile", tuple(float(x) for x in self.profile))
        object.__setattr__(self, "items_per_customer", tuple(int(x) for x in self.items_per_customer))
        object.__setattr__(self, "warm_seller_edges", tuple(int(x) for x in self.warm_seller_edges))
        if len(self.profile) != 3 or any(p < 0 for p in self.profile) or abs(sum(self.profile) - 1.0) > 1e-2:
            raise InfeasibleConfig("profile must be three non-negative proportions summing to 1")
        if self.n_clusters < 1 or self.sellers_per_cluster < 1 or self.products_per_cluster < 1:
            raise InfeasibleConfig("cluster sizes must be positive")
        if not 0 <= self.noise_rate <= 1 or not 0 <= self.shared_token_rate <= 1:
            raise InfeasibleConfig("rates must lie in [0, 1]")
        if not 1 <= self.n_candidates <= self.n_clusters * self.products_per_cluster:
            raise InfeasibleConfig("n_candidates must be between 1 and the product count")
        if max(hi for _, hi in BUCKET_RANGES) > self.sellers_per_cluster and self.profile[2] > 0:
            raise InfeasibleConfig("a candidate needs more distinct sellers than its cluster has")
        if self.warm_seller_edges[1] > self.sellers_per_cluster:
            raise InfeasibleConfig("warm_seller_edges exceeds sellers per cluster")
        lo, hi = self.items_per_customer
        if not 1 <= lo <= hi:
            raise InfeasibleConfig("items_per_customer must satisfy 1 <= min <= max")


@dataclass
class SynthDataset:
    nodes: list[tuple[str, NodeType]]
    edges: list[tuple[str, str, str]]
    candidates: list[str]
    ground_truth: list[tuple[str, str]]
    clusters: dict[str, int]
    texts: dict[str, str] = field(default_factory=dict)

    def candidate_interactions(self) -> dict[str, int]:
        cand = set(self.candidates)
        counts = {c: 0 for c in self.candidates}
        for a, b, tag in self.edges:
            if tag == "SP" and b in cand:
                counts[b] += 1
        return counts


def _apportion(total: int, weights) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights`` (largest remainder, ties to the front)."""
    w = np.asarray(weights, dtype=np.float64)
    raw = total * w / w.sum()
    out = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - out), kind="stable")[: total - out.sum()]:
        out[i] += 1
    return out


def generate(config: SynthConfig = SynthConfig()) -> SynthDataset:
    rng = np.random.default_rng(config.seed)
    k, n_s, n_p = config.n_clusters, config.sellers_per_cluster, config.products_per_cluster
    width = len(str(max(k * n_s, k * n_p, config.n_customers)))

    sellers = [[f"s{c * n_s + i:0{width}d}" for i in range(n_s)] for c in range(k)]
    products = [[f"p{c * n_p + i:0{width}d}" for i in range(n_p)] for c in range(k)]
    categories = [f"a{i}" for i in range(config.n_categories)]
    clusters = {raw: c for c in range(k) for raw in sellers[c] + products[c]}

    # candidates: spread evenly over clusters
    per_cluster = _apportion(config.n_candidates, np.ones(k))
    cand_by_cluster = []
    for c in range(k):
        idx = rng.choice(n_p, size=per_cluster[c], replace=False)
        cand_by_cluster.append([products[c][i] for i in sorted(idx)])
    candidates = [p for group in cand_by_cluster for p in group]
    cand_set = set(candidates)

    # interaction counts for candidates, exactly apportioned to the profile
    bucket_sizes = _apportion(len(candidates), config.profile)
    buckets = np.repeat(np.arange(3), bucket_sizes)
    rng.shuffle(buckets)
    sp_edges: list[tuple[str, str]] = []
    for prod, b in zip(candidates, buckets):
        lo, hi = BUCKET_RANGES[b]
        n = int(rng.integers(lo, hi + 1))
        if n:
            chosen = rng.choice(n_s, size=n, replace=False)
            sp_edges += [(sellers[clusters[prod]][i], prod) for i in sorted(chosen)]
    lo, hi = config.warm_seller_edges
    for c in range(k):
        for prod in products[c]:
            if prod in cand_set:
                continue
            n = int(rng.integers(lo, hi + 1))
            chosen = set()
            while len(chosen) < n:
                # noisy listings come from sellers of another cluster
                home = c
                if k > 1 and rng.random() < config.noise_rate:
                    home = int(rng.integers(k - 1))
                    home += home >= c
                chosen.add(sellers[home][int(rng.integers(n_s))])
            sp_edges += [(s, prod) for s in sorted(chosen)]

    # customers: mostly within their cluster, popularity-skewed
    pop = []
    for c in range(k):
        ranks = rng.permutation(n_p)
        w = 1.0 / (ranks + 1.0) ** config.popularity_exponent
        pop.append(w / w.sum())
    customers = [f"c{j:0{width}d}" for j in range(config.n_customers)]
    cp_edges: list[tuple[str, str]] = []
    lo, hi = config.items_per_customer
    for cust in customers:
        home = int(rng.integers(k))
        n = int(rng.integers(lo, hi + 1))
        basket: set[str] = set()
        for _ in range(n):
            if k > 1 and rng.random() < config.noise_rate:
                other = int(rng.integers(k - 1))
                other += other >= home
                basket.add(products[other][int(rng.integers(n_p))])
            else:
                basket.add(products[home][int(rng.choice(n_p, p=pop[home]))])
        cp_edges += [(cust, p) for p in sorted(basket)]

    # product text from a cluster vocabulary mixed with a shared one
    texts = {}
    for c in range(k):
        for prod in products[c]:
            toks = []
            for _ in range(config.tokens_per_product):
                if rng.random() < config.shared_token_rate:
                    toks.append(f"g{int(rng.integers(config.shared_vocab))}")
                else:
                    toks.append(f"k{c}w{int(rng.integers(config.vocab_per_cluster))}")
            texts[prod] = " ".join(toks)

    ap_edges = []
    if categories:
        for c in range(k):
            ap_edges += [(categories[c % len(categories)], p) for p in products[c]]

    emitted = set(sp_edges)
    truth = [(s, p) for c in range(k) for s in sellers[c] for p in cand_by_cluster[c] if (s, p) not in emitted]

    nodes = ([(s, NodeType.SELLER) for group in sellers for s in group]
             + [(p, NodeType.PRODUCT) for group in products for p in group]
             + [(a, NodeType.CATEGORY) for a in categories]
             + [(cst, NodeType.CUSTOMER) for cst in customers])
    edges = ([(s, p, "SP") for s, p in sp_edges] + [(a, p, "AP") for a, p in ap_edges]
             + [(cst, p, "CP") for cst, p in cp_edges])
    return SynthDataset(nodes, edges, candidates, truth, clusters, texts)


def oracle_recall(ground_truth, clusters: dict[str, int], candidates, k: int) -> float:
    """Recall@K of a ranker that lists same-cluster candidates first."""
    if k <= 0:
        return 0.0
    cands = sorted(candidates)
    relevant: dict[str, set[str]] = {}
    for s, p in ground_truth:
        relevant.setdefault(s, set()).add(p)
    if not relevant:
        return 0.0
    scores = []
    for s in sorted(relevant):
        home = clusters[s]
        ranked = [p for p in cands if clusters.get(p) == home] + [p for p in cands if clusters.get(p) != home]
        top = set(ranked[:k])
        scores.append(len(top & relevant[s]) / len(relevant[s]))
    return float(np.mean(scores))


def write_dataset(ds: SynthDataset, directory, dim: int, hash_seed: int = 0) -> dict[str, Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / fname for name, fname in [
        ("nodes", "nodes.tsv"), ("edges", "edges.tsv"), ("candidates", "candidates.txt"),
        ("ground_truth", "ground_truth.tsv"), ("clusters", "clusters.tsv"), ("content", "content.emb")]}
    write_nodes(paths["nodes"], ds.nodes)
    write_edges(paths["edges"], ds.edges)
    paths["candidates"].write_text("".join(f"{c}\n" for c in ds.candidates), encoding="utf-8")
    paths["ground_truth"].write_text("".join(f"{s}\t{p}\n" for s, p in ds.ground_truth), encoding="utf-8")
    paths["clusters"].write_text("".join(f"{r}\t{c}\n" for r, c in ds.clusters.items()), encoding="utf-8")
    write_embeddings(paths["content"], ((p, text_stub_embed(t, dim, hash_seed)) for p, t in ds.texts.items()), dim)
    return paths


def read_dataset(directory) -> SynthDataset:
    d = Path(directory)
    truth = [tuple(ln.split("\t")) for ln in (d / "ground_truth.tsv").read_text(encoding="utf-8").splitlines() if ln]
    clusters = {}
    for ln in (d / "clusters.tsv").read_text(encoding="utf-8").splitlines():
        if ln:
            raw, c = ln.split("\t")
            clusters[raw] = int(c)
    return SynthDataset(read_nodes(d / "nodes.tsv"), read_edges(d / "edges.tsv"), read_id_list(d / "candidates.txt"),
                        truth, clusters)
