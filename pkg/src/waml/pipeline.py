"""End-to-end run on a synthetic dataset: reduce, featurise, train, evaluate."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tensor
from .encoder import GraphOperator, WamlConfig
from .features import ContentTable, FeatureConfig, content_from_texts, init_h0
from .graph import HeteroGraph, NodeType
from .head import HeadConfig
from .model import ModelParams
from .reduction import ReductionConfig, ReductionReport, reduce_pipeline
from .retrieval import EmbeddingTable, EvalReport, encode_all, evaluate
from .synthetic import SynthDataset
from .trainer import EdgeSplit, TrainConfig, TrainResult, split_edges, train


@dataclass(frozen=True)
class ExperimentConfig:
    features: FeatureConfig = FeatureConfig(dim=32)
    waml: WamlConfig = WamlConfig()
    head: HeadConfig = HeadConfig()
    train: TrainConfig = TrainConfig()
    threshold: int = 2
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    node_embeddings: bool = False
    eval_k: int = 100

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, seed=seed))


@dataclass
class ExperimentResult:
    recall_ground_truth: float
    recall_test: float
    ground_truth_report: EvalReport
    test_report: EvalReport
    train_result: TrainResult
    params: ModelParams
    table: EmbeddingTable
    reduction: ReductionReport
    graph: HeteroGraph = field(repr=False)


def prepare_graph(ds: SynthDataset, threshold: int) -> tuple[HeteroGraph, ReductionReport]:
    return reduce_pipeline(ds.nodes, ds.edges, ReductionConfig(threshold, frozenset(ds.candidates)))


def training_graph(graph: HeteroGraph, split: EdgeSplit) -> HeteroGraph:
    """Drop held-out seller-product edges from message passing."""
    held = np.concatenate([split.validation, split.test])
    return graph.without_edges("SP", [tuple(e) for e in held])


def index_pairs(graph: HeteroGraph, pairs) -> np.ndarray:
    out = []
    for s, p in pairs:
        try:
            out.append((graph.index_of(s, NodeType.SELLER), graph.index_of(p, NodeType.PRODUCT)))
        except KeyError:
            continue
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


@dataclass
class TrainingInputs:
    split: EdgeSplit
    graph: HeteroGraph
    h0: Tensor
    op: GraphOperator


def training_inputs(graph: HeteroGraph, config: ExperimentConfig, content: ContentTable | None) -> TrainingInputs:
    """Split the seller-product edges and build features on the message-passing graph."""
    split = split_edges(graph.edge_sets["SP"], config.split_ratios, config.train.seed)
    msg_graph = training_graph(graph, split)
    h0 = init_h0(msg_graph, config.features, content, dtype=np.dtype(config.train.dtype))
    return TrainingInputs(split, msg_graph, h0, GraphOperator(msg_graph))


def run_experiment(ds: SynthDataset, config: ExperimentConfig, content: ContentTable | None = None,
                   reduced: tuple[HeteroGraph, ReductionReport] | None = None) -> ExperimentResult:
    graph, report = reduced if reduced is not None else prepare_graph(ds, config.threshold)
    if content is None and config.features.content_source == "text-stub":
        content = content_from_texts(ds.texts, config.features.dim, config.features.hash_seed)
    inp = training_inputs(graph, config, content)
    products = inp.graph.nodes_of_type(NodeType.PRODUCT)
    params, result = train(inp.h0, inp.op, inp.split, config.waml, config.head, config.train,
                           validation_pool=products, node_embeddings=config.node_embeddings)
    table = encode_all(inp.h0, inp.op, params, config.waml, config.head)
    cands = inp.graph.candidates()
    gt = evaluate(table, index_pairs(inp.graph, ds.ground_truth), cands, config.eval_k, pool_name="candidates")
    test = evaluate(table, inp.split.test, cands, config.eval_k, pool_name="candidates")
    return ExperimentResult(gt.recall, test.recall, gt, test, result, params, table, report, inp.graph)
