"""Exact top-K product retrieval for sellers and Recall@K."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import GraphOperator, WamlConfig
from .features import write_embeddings
from .head import HeadConfig
from .model import ModelParams, encode


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    normalized: bool = False

    def check(self, tol: float = 1e-5) -> bool:
        if not self.normalized:
            return True
        norms = np.linalg.norm(self.matrix, axis=1)
        nz = norms > 0
        return bool(np.all(np.abs(norms[nz] - 1.0) <= tol))


@dataclass
class EvalReport:
    k: int
    recall: float
    num_sellers: int
    per_seller: dict[int, tuple[int, int]] = field(default_factory=dict)
    filter_seen: bool = False
    pool: str = "candidates"
    extra: dict[str, str] = field(default_factory=dict)

    def as_lines(self) -> list[str]:
        lines = [f"k = {self.k}", f"recall = {self.recall:.10f}", f"num_sellers = {self.num_sellers}",
                 f"filter_seen = {str(self.filter_seen).lower()}", f"pool = {self.pool}"]
        lines += [f"{k} = {v}" for k, v in sorted(self.extra.items())]
        return lines

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.as_lines()) + "\n")


def encode_all(h0: Tensor, graph_or_op, params: ModelParams, waml: WamlConfig, head: HeadConfig) -> EmbeddingTable:
    """Inference-mode embeddings for every node (dropout off, nothing recorded)."""
    op = graph_or_op if isinstance(graph_or_op, GraphOperator) else GraphOperator(graph_or_op)
    with ad.no_grad():
        e = encode(h0, op, params, waml, head, training=False)
    return EmbeddingTable(e.data.copy(), normalized=head.final_l2_norm)


def _rank(scores: np.ndarray, items: np.ndarray, k: int) -> np.ndarray:
    # descending score, ascending product index on ties
    order = np.lexsort((items, -scores))
    return items[order[:k]]


def topk_products(table: EmbeddingTable, seller: int, candidates: Sequence[int], k: int,
                  exclude: Iterable[int] = ()) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    cand = np.asarray(sorted(set(int(c) for c in candidates) - set(int(x) for x in exclude)), dtype=np.int64)
    scores = table.matrix[cand] @ table.matrix[seller]
    return _rank(scores, cand, k)


def rank_sellers(table: EmbeddingTable, sellers: Iterable[int], candidates: Sequence[int], k: int,
                 seen: Mapping[int, Iterable[int]] | None = None) -> dict[int, np.ndarray]:
    """Top-K lists for many sellers; ``seen`` removes each seller's known products."""
    sellers = sorted(set(int(s) for s in sellers))
    cand = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    if not sellers:
        return {}
    scores = table.matrix[sellers] @ table.matrix[cand].T
    out = {}
    for row, s in enumerate(sellers):
        sc, items = scores[row], cand
        if seen is not None and s in seen:
            keep = ~np.isin(cand, np.fromiter(seen[s], dtype=np.int64))
            sc, items = sc[keep], cand[keep]
        out[s] = _rank(sc, items, k)
    return out


def recall_at_k(predictions: Mapping[int, Sequence[int]], held_out: Iterable[tuple[int, int]], k: int) -> EvalReport:
    """Mean over sellers of |top-K ∩ relevant| / |relevant|; sellers without held-out edges are skipped."""
    relevant: dict[int, set[int]] = defaultdict(set)
    for s, p in held_out:
        relevant[int(s)].add(int(p))
    per = {}
    for s in sorted(relevant):
        top = set(int(x) for x in list(predictions.get(s, ()))[:k]) if k > 0 else set()
        per[s] = (len(top & relevant[s]), len(relevant[s]))
    recall = float(np.mean([h / r for h, r in per.values()])) if per else 0.0
    return EvalReport(k=k, recall=recall, num_sellers=len(per), per_seller=per)


def evaluate(table: EmbeddingTable, held_out: Iterable[tuple[int, int]], pool: Sequence[int], k: int,
             seen: Mapping[int, Iterable[int]] | None = None, pool_name: str = "candidates") -> EvalReport:
    """Rank ``pool`` for every seller with held-out pairs inside the pool and score Recall@K."""
    pool_set = set(int(p) for p in pool)
    pairs = [(int(s), int(p)) for s, p in held_out if int(p) in pool_set]
    preds = rank_sellers(table, {s for s, _ in pairs}, sorted(pool_set), k, seen)
    report = recall_at_k(preds, pairs, k)
    report.filter_seen = seen is not None
    report.pool = pool_name
    return report


def export_embeddings(path, table: EmbeddingTable, raw_ids: Sequence[str]) -> None:
    write_embeddings(path, zip(raw_ids, table.matrix), table.matrix.shape[1])
