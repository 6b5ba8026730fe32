"""Residual feed-forward head applied after the convolution stack."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class HeadConfig:
    num_layers: int = 3
    beta_init: float = 0.3
    beta_trainable: bool = True
    shared_beta: bool = False
    dropout_rate: float = 0.1
    final_l2_norm: bool = True

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not np.isfinite(self.beta_init):
            raise ValueError("beta_init must be finite")


# Per-layer parameter names, in checkpoint order.
LAYER_KEYS = ("ln_gain", "ln_bias", "w1", "b1", "w2", "b2", "beta")


def init_ffn_params(d: int, config: HeadConfig, rng: np.random.Generator, dtype=np.float32) -> list[dict[str, Tensor]]:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, unit LayerNorm gain."""
    layers = []
    shared = None
    for j in range(config.num_layers):
        lim1, lim2 = 1.0 / np.sqrt(d), 1.0 / np.sqrt(4 * d)
        p = {
            "ln_gain": Tensor(np.ones((1, d), dtype=dtype), requires_grad=True),
            "ln_bias": Tensor(np.zeros((1, d), dtype=dtype), requires_grad=True),
            "w1": Tensor(rng.uniform(-lim1, lim1, (d, 4 * d)).astype(dtype), requires_grad=True),
            "b1": Tensor(np.zeros((1, 4 * d), dtype=dtype), requires_grad=True),
            "w2": Tensor(rng.uniform(-lim2, lim2, (4 * d, d)).astype(dtype), requires_grad=True),
            "b2": Tensor(np.zeros((1, d), dtype=dtype), requires_grad=True),
        }
        if config.shared_beta and shared is not None:
            p["beta"] = shared
        else:
            p["beta"] = Tensor(np.full((1, 1), config.beta_init, dtype=dtype), requires_grad=config.beta_trainable)
            shared = p["beta"]
        for k, t in p.items():
            t.name = f"ffn.{j}.{k}"
        layers.append(p)
    return layers


def ffn_layer(x: Tensor, params: dict[str, Tensor], training: bool = False, dropout_rate: float = 0.0,
              rng: np.random.Generator | None = None) -> Tensor:
    """x + beta * unit(GELU(LayerNorm(x) W1 + b1) W2 + b2), with dropout on the 4d activation."""
    d = x.shape[1]
    if params["w1"].shape != (d, 4 * d) or params["w2"].shape != (4 * d, d):
        raise ValueError(f"ffn weights do not match input width {d}")
    x1 = ad.layer_norm(x, params["ln_gain"], params["ln_bias"])
    x2 = ad.gelu(ad.add_row_broadcast(ad.matmul(x1, params["w1"]), params["b1"]))
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        x2 = ad.mul(x2, Tensor(ad.dropout_mask(x2.shape, dropout_rate, rng, x2.dtype)))
    x3 = ad.add_row_broadcast(ad.matmul(x2, params["w2"]), params["b2"])
    return ad.add(x, ad.scale(ad.row_l2_normalize(x3), params["beta"]))


def head_forward(e0: Tensor, params: list[dict[str, Tensor]], config: HeadConfig, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    e = e0
    for layer in params[:config.num_layers]:
        e = ffn_layer(e, layer, training, config.dropout_rate, rng)
    if config.final_l2_norm:
        e = ad.row_l2_normalize(e)
    return e
