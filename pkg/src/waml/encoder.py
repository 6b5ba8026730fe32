"""Parameter-free graph convolution stack: each layer mixes a node with its normalised neighbour sum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import HeteroGraph

TUNED_ALPHAS = (0.4, 0.45, 0.5, 0.6, 0.7)
AGGREGATORS = ("waml", "lightgcn-sum", "plain-mix")
ALPHA_MODES = ("fixed", "trainable-logistic")


@dataclass(frozen=True)
class WamlConfig:
    """``aggregator`` picks the layer rule.

    * ``waml``: L2-normalise self and degree-scaled neighbour sum, mix by alpha.
    * ``lightgcn-sum``: neighbour sum over sqrt(degree), no self term.
    * ``plain-mix``: alpha mix of the raw self row and neighbour sum over
      sqrt(degree), no L2 steps (the un-normalised starting point of the
      ablation ladder).
    """

    alphas: tuple[float, ...] = TUNED_ALPHAS
    alpha_mode: str = "fixed"
    aggregator: str = "waml"

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ValueError("every alpha must lie in [0, 1]")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}")

    @property
    def num_layers(self) -> int:
        return len(self.alphas)


@dataclass
class LayerTrace:
    layers: list[Tensor] = field(default_factory=list)


class GraphOperator:
    """Precomputed neighbour index arrays for repeated aggregation over one graph."""

    def __init__(self, graph: HeteroGraph):
        self.num_nodes = graph.num_nodes
        self.indices = graph.indices
        self.segments = graph.segment_ids()
        deg = graph.degrees.astype(np.float64)
        self.inv_sqrt_deg = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1.0)), 0.0)[:, None]

    def neighbour_sum(self, h: Tensor) -> Tensor:
        return ad.segment_sum(ad.gather_rows(h, self.indices), self.segments, self.num_nodes)

    def scale_by_degree(self, x: Tensor) -> Tensor:
        return ad.mul(x, Tensor(self.inv_sqrt_deg.astype(x.dtype)))


def _operator(graph) -> GraphOperator:
    return graph if isinstance(graph, GraphOperator) else GraphOperator(graph)


def _mix(self_term: Tensor, nbr_term: Tensor, alpha) -> Tensor:
    if isinstance(alpha, Tensor):
        return self_term * alpha + nbr_term * (1.0 - alpha)
    return self_term * float(alpha) + nbr_term * (1.0 - float(alpha))


def waml_layer(h: Tensor, graph, alpha) -> Tensor:
    """One layer: alpha * h_v/|h_v| + (1 - alpha) * unit(sum_{u in N(v)} h_u/|h_u| / sqrt|N(v)|).

    All neighbour sums read the normalised *input* rows (simultaneous update).
    Isolated nodes get a zero neighbour term.
    """
    op = _operator(graph)
    if h.shape[0] != op.num_nodes:
        raise ValueError(f"feature rows {h.shape[0]} != node count {op.num_nodes}")
    if not isinstance(alpha, Tensor) and not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    h_hat = ad.row_l2_normalize(h)
    nbr = op.scale_by_degree(op.neighbour_sum(h_hat))
    nbr = ad.row_l2_normalize(nbr)
    return _mix(h_hat, nbr, alpha)


def lightgcn_layer(h: Tensor, graph) -> Tensor:
    op = _operator(graph)
    return op.scale_by_degree(op.neighbour_sum(h))


def plain_mix_layer(h: Tensor, graph, alpha) -> Tensor:
    op = _operator(graph)
    return _mix(h, op.scale_by_degree(op.neighbour_sum(h)), alpha)


def alpha_params(config: WamlConfig, dtype=np.float32) -> list[Tensor]:
    """Unconstrained logits whose logistic equals the configured alphas."""
    eps = 1e-6
    out = []
    for i, a in enumerate(config.alphas):
        a = min(max(a, eps), 1 - eps)
        out.append(Tensor(np.array([[np.log(a / (1 - a))]], dtype=dtype), requires_grad=True,
                          name=f"alpha_logit.{i}"))
    return out


def waml_stack(h0: Tensor, graph, config: WamlConfig, alpha_logits: list[Tensor] | None = None,
               trace: LayerTrace | None = None) -> Tensor:
    """Apply ``len(config.alphas)`` layers and return the last layer's output."""
    op = _operator(graph)
    if config.alpha_mode == "trainable-logistic":
        if alpha_logits is None or len(alpha_logits) != config.num_layers:
            raise ValueError("trainable-logistic mode needs one alpha logit per layer")
        alphas = [ad.sigmoid(t) for t in alpha_logits]
    else:
        alphas = list(config.alphas)
    h = h0
    if trace is not None:
        trace.layers.append(h)
    for alpha in alphas:
        if config.aggregator == "waml":
            h = waml_layer(h, op, alpha)
        elif config.aggregator == "lightgcn-sum":
            h = lightgcn_layer(h, op)
        else:
            h = plain_mix_layer(h, op, alpha)
        if trace is not None:
            trace.layers.append(h)
    return h
