"""Full encoder: initial features -> convolution stack -> FFN head."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import GraphOperator, WamlConfig, alpha_params, waml_stack
from .head import LAYER_KEYS, HeadConfig, head_forward, init_ffn_params


@dataclass
class ModelParams:
    """Everything the optimiser may update."""

    ffn: list[dict[str, Tensor]] = field(default_factory=list)
    alpha_logits: list[Tensor] | None = None
    node_embeddings: Tensor | None = None

    def named(self) -> dict[str, Tensor]:
        """Parameters by name in a fixed order; a shared beta appears once."""
        out: dict[str, Tensor] = {}
        seen: set[int] = set()
        for j, layer in enumerate(self.ffn):
            for k in LAYER_KEYS:
                t = layer[k]
                if id(t) in seen:
                    continue
                seen.add(id(t))
                out[f"ffn.{j}.{k}"] = t
        for i, t in enumerate(self.alpha_logits or []):
            out[f"alpha_logit.{i}"] = t
        if self.node_embeddings is not None:
            out["node_embeddings"] = self.node_embeddings
        return out

    def trainable(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.named().items() if t.requires_grad}

    def zero_grad(self) -> None:
        for t in self.named().values():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named().items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for k, t in self.named().items():
            t.data = values[k].astype(t.dtype, copy=True)

    def clone(self) -> "ModelParams":
        return copy.deepcopy(self)


def init_params(d: int, num_nodes: int, waml: WamlConfig, head: HeadConfig, rng: np.random.Generator,
                dtype=np.float32, node_embeddings: bool = False) -> ModelParams:
    params = ModelParams(ffn=init_ffn_params(d, head, rng, dtype))
    if waml.alpha_mode == "trainable-logistic":
        params.alpha_logits = alpha_params(waml, dtype)
    if node_embeddings:
        params.node_embeddings = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d), (num_nodes, d)).astype(dtype),
                                        requires_grad=True, name="node_embeddings")
    return params


def stack_depends_on_params(params: ModelParams) -> bool:
    return params.alpha_logits is not None or params.node_embeddings is not None


def convolve(h0: Tensor, op: GraphOperator, params: ModelParams, waml: WamlConfig) -> Tensor:
    h = h0 if params.node_embeddings is None else ad.add(h0, params.node_embeddings)
    return waml_stack(h, op, waml, params.alpha_logits)


def embed_rows(hk: Tensor, rows, params: ModelParams, head: HeadConfig, training: bool = False,
               rng: np.random.Generator | None = None) -> Tensor:
    """Head output for selected rows of the convolution output (the head is row-wise)."""
    x = hk if rows is None else ad.gather_rows(hk, rows)
    return head_forward(x, params.ffn, head, training, rng)


def encode(h0: Tensor, op: GraphOperator, params: ModelParams, waml: WamlConfig, head: HeadConfig,
           training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    return embed_rows(convolve(h0, op, params, waml), None, params, head, training, rng)
