"""Finite-difference verification of the full encoder + loss composite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import GraphOperator, WamlConfig
from .features import FeatureConfig, init_h0, text_stub_embed, ContentTable
from .graph import HeteroGraph, NodeType, build_graph
from .head import HeadConfig
from .model import ModelParams, encode, init_params
from .trainer import contrastive_loss


def tiny_graph() -> HeteroGraph:
    """Two sellers, three products, one category."""
    nodes = [("s1", NodeType.SELLER), ("s2", NodeType.SELLER), ("p1", NodeType.PRODUCT),
             ("p2", NodeType.PRODUCT), ("p3", NodeType.PRODUCT), ("a1", NodeType.CATEGORY)]
    edges = [("s1", "p1", "SP"), ("s1", "p2", "SP"), ("s2", "p2", "SP"), ("s2", "p3", "SP"),
             ("p1", "p3", "PP"), ("a1", "p1", "AP"), ("a1", "p2", "AP"), ("a1", "p3", "AP")]
    return build_graph(nodes, edges, candidates=["p1", "p2", "p3"])


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    worst: str

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def composite_loss(h0: Tensor, op: GraphOperator, params: ModelParams, waml: WamlConfig, head: HeadConfig,
                   batch: np.ndarray, tau: float) -> Tensor:
    e = encode(h0, op, params, waml, head, training=False)
    return contrastive_loss(ad.gather_rows(e, batch[:, 0]), ad.gather_rows(e, batch[:, 1]), tau)


def check_gradients(named: dict[str, Tensor], loss_fn, step: float = 1e-5, floor: float = 1e-8) -> GradCheckResult:
    """Compare tape gradients of ``loss_fn()`` with central differences, elementwise."""
    for t in named.values():
        t.zero_grad()
    with ad.recording() as tape:
        loss = loss_fn()
        ad.backward(loss, tape)
    analytic = {k: t.grad.copy() for k, t in named.items()}
    worst, worst_name, checked = 0.0, "", 0
    with ad.no_grad():
        for name, t in named.items():
            for idx in np.ndindex(t.shape):
                orig = t.data[idx]
                t.data[idx] = orig + step
                up = loss_fn().item()
                t.data[idx] = orig - step
                down = loss_fn().item()
                t.data[idx] = orig
                num = (up - down) / (2 * step)
                a = analytic[name][idx]
                if abs(a) + abs(num) <= floor:
                    continue
                checked += 1
                rel = abs(a - num) / max(abs(a), abs(num))
                if rel > worst:
                    worst, worst_name = rel, f"{name}{list(idx)}"
    return GradCheckResult(worst, checked, worst_name)


def run_default(alpha_mode: str = "fixed", dim: int = 4, seed: int = 0, tau: float = 0.1) -> GradCheckResult:
    """Grad-check the default configuration (5 WAML layers, 3 FFN layers) on :func:`tiny_graph` at 64-bit."""
    graph = tiny_graph()
    op = GraphOperator(graph)
    texts = {"p1": "red cotton shirt", "p2": "blue cotton shirt", "p3": "steel kettle"}
    content = ContentTable(dim, {k: text_stub_embed(v, dim, seed) for k, v in texts.items()})
    h0 = init_h0(graph, FeatureConfig(dim=dim, hash_seed=seed), content, dtype=np.float64)
    h0.requires_grad = True
    h0.grad = np.zeros_like(h0.data)
    waml = WamlConfig(alpha_mode=alpha_mode)
    head = HeadConfig(dropout_rate=0.0)
    rng = np.random.default_rng(seed)
    params = init_params(dim, graph.num_nodes, waml, head, rng, np.float64)
    # non-zero biases so every parameter has a visible gradient
    for layer in params.ffn:
        for key in ("b1", "b2", "ln_bias"):
            layer[key].data = rng.normal(0, 0.1, layer[key].shape)
        layer["ln_gain"].data = 1.0 + rng.normal(0, 0.1, layer["ln_gain"].shape)
    batch = np.array([[graph.index_of("s1", NodeType.SELLER), graph.index_of("p1", NodeType.PRODUCT)],
                      [graph.index_of("s2", NodeType.SELLER), graph.index_of("p3", NodeType.PRODUCT)]])
    named = dict(params.trainable())
    named["h0"] = h0
    return check_gradients(named, lambda: composite_loss(h0, op, params, waml, head, batch, tau))
