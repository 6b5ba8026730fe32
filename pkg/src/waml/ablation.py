"""Cumulative ablation ladder: each row adds one ingredient to the row above.

Rows that need baselines outside this package (matrix factorisation,
neural CF, attention GNNs) are not part of the ladder.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .encoder import TUNED_ALPHAS, WamlConfig
from .features import ContentTable, FeatureConfig
from .head import HeadConfig
from .pipeline import ExperimentConfig, prepare_graph, run_experiment
from .synthetic import SynthDataset
from .trainer import TrainConfig


@dataclass(frozen=True)
class LadderRow:
    name: str
    config: ExperimentConfig


def base_config(dim: int = 32, train: TrainConfig = TrainConfig()) -> ExperimentConfig:
    """Trainable node embeddings, un-normalised alpha=0.5 mixing, no head, triplet loss."""
    return ExperimentConfig(
        features=FeatureConfig(dim=dim, content_source="zeros", use_id_hash=False, use_type_hash=False),
        waml=WamlConfig(alphas=(0.5,) * len(TUNED_ALPHAS), aggregator="plain-mix"),
        head=HeadConfig(num_layers=0, final_l2_norm=False),
        train=replace(train, loss="triplet"),
        node_embeddings=True,
    )


def ladder(dim: int = 32, train: TrainConfig = TrainConfig()) -> list[LadderRow]:
    rows = [LadderRow("base", base_config(dim, train))]

    def add(name, change):
        rows.append(LadderRow(name, change(rows[-1].config)))

    add("+content", lambda c: replace(c, features=replace(c.features, content_source="text-stub")))
    add("+hashes", lambda c: replace(c, features=replace(c.features, use_id_hash=True, use_type_hash=True),
                                     node_embeddings=False))
    add("+l2-norm waml", lambda c: replace(c, waml=replace(c.waml, aggregator="waml")))
    add("+tuned alpha", lambda c: replace(c, waml=replace(c.waml, alphas=TUNED_ALPHAS)))
    # FFN with a fixed unit residual weight; the next row makes it a learned beta
    add("+ffn", lambda c: replace(c, head=replace(c.head, num_layers=3, beta_init=1.0, beta_trainable=False)))
    add("+beta", lambda c: replace(c, head=replace(c.head, beta_init=HeadConfig().beta_init, beta_trainable=True)))
    add("+contrastive", lambda c: replace(c, train=replace(c.train, loss="contrastive")))
    add("+output l2", lambda c: replace(c, head=replace(c.head, final_l2_norm=True)))
    return rows


@dataclass
class LadderResult:
    name: str
    recall_ground_truth: float
    recall_test: float
    best_epoch: int
    seconds: float


def run_ladder(ds: SynthDataset, rows: list[LadderRow], seed: int = 0, threshold: int = 2,
               content: ContentTable | None = None, log=None) -> list[LadderResult]:
    reduced = prepare_graph(ds, threshold)
    out = []
    for row in rows:
        t0 = time.perf_counter()
        res = run_experiment(ds, replace(row.config.with_seed(seed), threshold=threshold),
                             content=content, reduced=reduced)
        out.append(LadderResult(row.name, res.recall_ground_truth, res.recall_test,
                                res.train_result.best_epoch, time.perf_counter() - t0))
        if log is not None:
            log(out[-1])
    return out


def format_table(results: list[LadderResult]) -> str:
    lines = ["row\trecall_ground_truth\trecall_test\tdelta_vs_previous\tbest_epoch"]
    prev = None
    for r in results:
        delta = "" if prev is None or prev == 0 else f"{(r.recall_ground_truth - prev) / prev:+.2%}"
        lines.append(f"{r.name}\t{r.recall_ground_truth:.6f}\t{r.recall_test:.6f}\t{delta}\t{r.best_epoch}")
        prev = r.recall_ground_truth
    return "\n".join(lines) + "\n"
