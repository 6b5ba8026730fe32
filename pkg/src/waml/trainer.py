"""Seller-anchored contrastive training with AdamW."""

from __future__ import annotations

import io
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .encoder import GraphOperator, WamlConfig
from .head import HeadConfig
from .model import ModelParams, convolve, embed_rows, init_params, stack_depends_on_params
from .retrieval import encode_all, evaluate

LOSSES = ("contrastive", "triplet")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    temperature: float = 0.1
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    loss: str = "contrastive"
    symmetric: bool = False
    triplet_margin: float = 0.5
    eval_k: int = 100
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


@dataclass
class EdgeSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 2))


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


@dataclass
class TrainResult:
    log: list[tuple[int, float, float, float]]
    best_epoch: int
    best_validation: float

    def log_lines(self) -> list[str]:
        return [f"{e}\t{loss:.6f}\t{rec:.6f}\t{sec:.3f}" for e, loss, rec, sec in self.log]


# --- data ----------------------------------------------------------------------

def split_edges(edges, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> EdgeSplit:
    """Seeded random partition; split sizes use largest-remainder rounding."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or np.any(ratios <= 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError("ratios must be three positive numbers summing to 1")
    m = len(edges)
    raw = ratios * m
    sizes = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - sizes), kind="stable")[: m - sizes.sum()]:
        sizes[i] += 1
    if np.any(sizes == 0):
        raise ValueError(f"{m} edges cannot populate train/validation/test splits with ratios {tuple(ratios)}")
    perm = np.random.default_rng(seed).permutation(m)
    a, b = sizes[0], sizes[0] + sizes[1]
    return EdgeSplit(edges[perm[:a]], edges[perm[a:b]], edges[perm[b:]])


def sample_minibatch(train_edges, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` distinct training edges drawn without replacement."""
    train_edges = np.asarray(train_edges).reshape(-1, 2)
    if n > len(train_edges):
        raise ValueError(f"batch size {n} exceeds {len(train_edges)} training edges")
    return train_edges[rng.choice(len(train_edges), size=n, replace=False)]


def epoch_batches(train_edges, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """One shuffled pass over the training edges; the last batch may be short."""
    train_edges = np.asarray(train_edges).reshape(-1, 2)
    if n > len(train_edges):
        raise ValueError(f"batch size {n} exceeds {len(train_edges)} training edges")
    perm = rng.permutation(len(train_edges))
    return [train_edges[perm[i:i + n]] for i in range(0, len(perm), n)]


# --- losses ----------------------------------------------------------------------

def contrastive_loss(e_s: Tensor, e_p: Tensor, tau: float = 0.1, symmetric: bool = False) -> Tensor:
    """In-batch contrastive loss anchored on sellers.

    For seller i the denominator runs over every other embedding in the batch
    (all N products and the N-1 other sellers); the anchor itself is left out.
    """
    n = e_s.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    if e_p.shape != e_s.shape:
        raise ValueError("seller and product embeddings must have equal shapes")
    inv_tau = 1.0 / tau
    rows = np.arange(n)
    others = ad.concat_rows([e_p, e_s])                   # columns: products then sellers
    logits = ad.mul(ad.matmul(e_s, ad.transpose(others)), inv_tau)
    mask = np.ones((n, 2 * n), dtype=bool)
    mask[rows, n + rows] = False
    loss = ad.mean(ad.sub(ad.logsumexp_rows(logits, mask), ad.pick(logits, rows)))
    if symmetric:
        back = ad.concat_rows([e_s, e_p])                 # columns: sellers then products
        logits_p = ad.mul(ad.matmul(e_p, ad.transpose(back)), inv_tau)
        mask_p = np.ones((n, 2 * n), dtype=bool)
        mask_p[rows, n + rows] = False
        loss_p = ad.mean(ad.sub(ad.logsumexp_rows(logits_p, mask_p), ad.pick(logits_p, rows)))
        loss = ad.mul(ad.add(loss, loss_p), 0.5)
    return loss


def triplet_loss(e_s: Tensor, e_p: Tensor, margin: float = 0.5) -> Tensor:
    """Margin triplet baseline: the negative for pair i is the product of pair i+1."""
    n = e_s.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    neg = ad.gather_rows(e_p, (np.arange(n) + 1) % n)
    gap = ad.sub(ad.row_dot(e_s, neg), ad.row_dot(e_s, e_p))
    return ad.mean(ad.relu(ad.add_scalar(gap, margin)))


# --- optimiser -------------------------------------------------------------------

def adamw_step(params: dict[str, Tensor], state: OptimizerState, config: TrainConfig,
               grads: dict[str, np.ndarray] | None = None) -> None:
    """Decoupled weight decay, then a bias-corrected Adam step."""
    state.step += 1
    t = state.step
    lr, b1, b2 = config.learning_rate, config.adam_beta1, config.adam_beta2
    for name, p in params.items():
        if not p.requires_grad:
            continue
        g = grads[name] if grads is not None else p.grad
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ValueError(f"optimizer state for {name} has shape {m.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        data = p.data - lr * config.weight_decay * p.data
        p.data = (data - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)).astype(p.dtype)


# --- training loop -----------------------------------------------------------------

def batch_loss(hk: Tensor, batch: np.ndarray, params: ModelParams, head: HeadConfig, config: TrainConfig,
               rng: np.random.Generator | None) -> Tensor:
    n = len(batch)
    rows = np.concatenate([batch[:, 0], batch[:, 1]])
    e = embed_rows(hk, rows, params, head, training=True, rng=rng)
    e_s = ad.gather_rows(e, np.arange(n))
    e_p = ad.gather_rows(e, np.arange(n, 2 * n))
    if config.loss == "triplet":
        return triplet_loss(e_s, e_p, config.triplet_margin)
    return contrastive_loss(e_s, e_p, config.temperature, config.symmetric)


def train(h0: Tensor, graph_or_op, split: EdgeSplit, waml: WamlConfig, head: HeadConfig, config: TrainConfig,
          validation_pool: Sequence[int] | None = None, params: ModelParams | None = None,
          node_embeddings: bool = False, log_stream=None) -> tuple[ModelParams, TrainResult]:
    """Fit the head (and any trainable alphas or node embeddings) on ``split.train``.

    Validation Recall@K is computed every epoch over ``validation_pool``; the
    best-scoring epoch's parameters are returned.  When nothing upstream of
    the head is trainable, the convolution output is computed once.
    """
    op = graph_or_op if isinstance(graph_or_op, GraphOperator) else GraphOperator(graph_or_op)
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(h0.shape[1], op.num_nodes, waml, head, rng, dtype, node_embeddings)
    h0 = Tensor(h0.data.astype(dtype))
    trainable = params.trainable()
    state = OptimizerState()
    pool = np.asarray(validation_pool if validation_pool is not None else [], dtype=np.int64)
    batch_n = min(config.batch_size, len(split.train))

    cached = None
    if not stack_depends_on_params(params):
        with ad.no_grad():
            cached = convolve(h0, op, params, waml)

    log: list[tuple[int, float, float, float]] = []
    best = (-1.0, 0, params.snapshot())
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for batch in epoch_batches(split.train, batch_n, rng):
            with ad.recording() as tape:
                hk = cached if cached is not None else convolve(h0, op, params, waml)
                loss = batch_loss(hk, batch, params, head, config, rng)
                if not np.isfinite(loss.item()):
                    raise NonFiniteError(f"non-finite loss at epoch {epoch}")
                params.zero_grad()
                ad.backward(loss, tape)
            adamw_step(trainable, state, config)
            losses.append(loss.item())
        val = float("nan")
        if len(split.validation) and len(pool):
            table = encode_all(h0, op, params, waml, head)
            val = evaluate(table, split.validation, pool, config.eval_k).recall
        mean_loss = float(np.mean(losses))
        entry = (epoch, mean_loss, val, time.perf_counter() - t0)
        log.append(entry)
        if log_stream is not None:
            log_stream.write(f"{entry[0]}\t{entry[1]:.6f}\t{entry[2]:.6f}\t{entry[3]:.3f}\n")
        score = val if np.isfinite(val) else -mean_loss
        if score > best[0] or epoch == 1:
            best = (score, epoch, params.snapshot())
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    params.restore(best[2])
    return params, TrainResult(log, best[1], best[0])


# --- checkpoints --------------------------------------------------------------------

CKPT_MAGIC = b"WAMLCKPT"
CKPT_VERSION = 1


def config_echo(**configs) -> dict:
    out = {}
    for name, cfg in configs.items():
        out[name] = asdict(cfg) if hasattr(cfg, "__dataclass_fields__") else cfg
    return json.loads(json.dumps(out, sort_keys=True, default=lambda o: sorted(o) if isinstance(o, (set, frozenset)) else str(o)))


def save_checkpoint(path, params: ModelParams, echo: dict) -> None:
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<I", CKPT_VERSION))
    text = json.dumps(echo, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    named = params.named()
    buf.write(struct.pack("<I", len(named)))
    for name, t in named.items():
        b = name.encode("utf-8")
        buf.write(struct.pack("<I", len(b)))
        buf.write(b)
        buf.write(struct.pack("<II", *t.shape))
        buf.write(struct.pack("<B", int(t.requires_grad)))
        buf.write(t.data.astype("<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, dtype=np.float32) -> tuple[ModelParams, dict]:
    data = io.BytesIO(Path(path).read_bytes())
    if data.read(8) != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    (version,) = struct.unpack("<I", data.read(4))
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (n,) = struct.unpack("<I", data.read(4))
    echo = json.loads(data.read(n).decode("utf-8"))
    (count,) = struct.unpack("<I", data.read(4))
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (ln,) = struct.unpack("<I", data.read(4))
        name = data.read(ln).decode("utf-8")
        rows, cols = struct.unpack("<II", data.read(8))
        (req,) = struct.unpack("<B", data.read(1))
        arr = np.frombuffer(data.read(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(dtype)
        tensors[name] = Tensor(arr, requires_grad=bool(req), name=name)
    params = ModelParams()
    layers: dict[int, dict[str, Tensor]] = {}
    alphas: dict[int, Tensor] = {}
    for name, t in tensors.items():
        if name.startswith("ffn."):
            _, j, key = name.split(".")
            layers.setdefault(int(j), {})[key] = t
        elif name.startswith("alpha_logit."):
            alphas[int(name.split(".")[1])] = t
        elif name == "node_embeddings":
            params.node_embeddings = t
    shared = None
    for j in sorted(layers):
        if "beta" not in layers[j]:
            layers[j]["beta"] = shared
        shared = layers[j]["beta"]
        params.ffn.append(layers[j])
    if alphas:
        params.alpha_logits = [alphas[i] for i in sorted(alphas)]
    return params, echo
