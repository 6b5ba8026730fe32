"""Initial node vectors: id hash + type hash + content."""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .autodiff import Tensor
from .graph import HeteroGraph, NodeType

EMB_MAGIC = b"WAMLEMB1"
CONTENT_SOURCES = ("precomputed-file", "text-stub", "zeros")


@dataclass(frozen=True)
class FeatureConfig:
    dim: int = 256
    hash_seed: int = 0
    content_source: str = "text-stub"
    use_id_hash: bool = True
    use_type_hash: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.content_source not in CONTENT_SOURCES:
            raise ValueError(f"content_source must be one of {CONTENT_SOURCES}")


@dataclass
class ContentTable:
    """Content vectors keyed by product raw id; every other node reads as zero."""

    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for key, vec in self.vectors.items():
            if np.shape(vec) != (self.dim,):
                raise ValueError(f"content vector for {key!r} has shape {np.shape(vec)}, expected ({self.dim},)")

    def lookup(self, raw: str, node_type: NodeType) -> np.ndarray | None:
        if node_type != NodeType.PRODUCT:
            return None
        return self.vectors.get(raw)


def _seed_bytes(seed: int) -> bytes:
    return struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)


def hash_embed(key: str, d: int, seed: int = 0) -> np.ndarray:
    """Unit-norm sign vector: coordinate j is +-1/sqrt(d) from bit j of SHAKE-256(seed, key)."""
    digest = hashlib.shake_256(_seed_bytes(seed) + key.encode("utf-8")).digest((d + 7) // 8)
    bits = np.unpackbits(np.frombuffer(digest, dtype=np.uint8), bitorder="little")[:d]
    return (2.0 * bits - 1.0) / np.sqrt(d)


def text_stub_embed(text: str, d: int, seed: int = 0) -> np.ndarray:
    """Stand-in text encoder: normalized sum of token hashes (lowercase, whitespace split)."""
    tokens = text.lower().split()
    if not tokens:
        return np.zeros(d)
    v = np.zeros(d)
    for tok in tokens:
        v += hash_embed(tok, d, seed)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def content_from_texts(texts: Mapping[str, str], d: int, seed: int = 0) -> ContentTable:
    return ContentTable(d, {k: text_stub_embed(t, d, seed) for k, t in texts.items()})


def init_h0(graph: HeteroGraph, config: FeatureConfig, content: ContentTable | None = None,
            dtype=np.float32) -> Tensor:
    """Rows are HASH(id) + HASH(type) + content; sellers and categories get no content."""
    d = config.dim
    if content is not None and content.dim != d:
        raise ValueError(f"content dimension {content.dim} does not match feature dimension {d}")
    type_vecs = {t: hash_embed(t.value, d, config.hash_seed) for t in NodeType}
    out = np.zeros((graph.num_nodes, d))
    for i, (raw, t) in enumerate(zip(graph.raw_ids, graph.node_types)):
        if config.use_id_hash:
            out[i] += hash_embed(raw, d, config.hash_seed)
        if config.use_type_hash:
            out[i] += type_vecs[t]
        if content is not None and config.content_source != "zeros":
            x = content.lookup(raw, t)
            if x is not None:
                out[i] += x
    return Tensor(out.astype(dtype))


# --- WAMLEMB1 files ----------------------------------------------------------

def write_embeddings(path, records: Iterable[tuple[str, np.ndarray]], d: int) -> None:
    buf = io.BytesIO()
    buf.write(EMB_MAGIC)
    buf.write(struct.pack("<I", d))
    for raw, vec in records:
        vec = np.asarray(vec, dtype="<f4")
        if vec.shape != (d,):
            raise ValueError(f"vector for {raw!r} has shape {vec.shape}")
        b = raw.encode("utf-8")
        buf.write(struct.pack("<I", len(b)))
        buf.write(b)
        buf.write(vec.tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_embeddings(path) -> tuple[int, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != EMB_MAGIC:
        raise ValueError(f"{path}: not a WAMLEMB1 file")
    (d,) = struct.unpack_from("<I", data, 8)
    pos, out = 12, {}
    while pos < len(data):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        raw = data[pos:pos + n].decode("utf-8")
        pos += n
        out[raw] = np.frombuffer(data, dtype="<f4", count=d, offset=pos).astype(np.float64)
        pos += 4 * d
    return d, out


def load_content(path, d: int) -> ContentTable:
    file_d, vecs = read_embeddings(path)
    if file_d != d:
        raise ValueError(f"{path}: content dimension {file_d} does not match {d}")
    return ContentTable(d, vecs)
