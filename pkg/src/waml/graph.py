"""Typed heterogeneous graph with undirected CSR adjacency."""

from __future__ import annotations

import enum
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphBuildError(ValueError):
    """Raised when node or edge input cannot form a valid graph."""


class NodeType(str, enum.Enum):
    CUSTOMER = "Customer"
    PRODUCT = "Product"
    SELLER = "Seller"
    CATEGORY = "Category"

    @classmethod
    def parse(cls, name: str) -> "NodeType":
        for t in cls:
            if name.strip().lower() == t.value.lower():
                return t
        raise GraphBuildError(f"unknown node type {name!r}")


# Edge type tag -> (type of first endpoint, type of second endpoint)
EDGE_TYPES: dict[str, tuple[NodeType, NodeType]] = {
    "SP": (NodeType.SELLER, NodeType.PRODUCT),
    "CP": (NodeType.CUSTOMER, NodeType.PRODUCT),
    "AP": (NodeType.CATEGORY, NodeType.PRODUCT),
    "PP": (NodeType.PRODUCT, NodeType.PRODUCT),
}

_TYPE_CODES = {t: i for i, t in enumerate(NodeType)}
_CODE_TYPES = {i: t for t, i in _TYPE_CODES.items()}


@dataclass(frozen=True)
class WeightedEdge:
    """Product-product edge carrying a co-occurrence count, with ``u < v``."""

    u: str
    v: str
    count: int

    def __post_init__(self):
        if not self.u < self.v:
            raise ValueError(f"non-canonical edge ({self.u!r}, {self.v!r})")
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass(eq=False)
class HeteroGraph:
    """Immutable typed graph.

    ``indptr``/``indices`` form a symmetric CSR adjacency over dense node
    indices; ``edge_sets`` keeps the deduplicated undirected edges per type
    tag as ``(m, 2)`` arrays with the first column typed per ``EDGE_TYPES``.
    """

    raw_ids: list[str]
    node_types: list[NodeType]
    indptr: np.ndarray
    indices: np.ndarray
    edge_sets: dict[str, np.ndarray]
    candidate_flags: np.ndarray
    _lookup: dict[tuple[NodeType, str], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._lookup:
            self._lookup = {(t, r): i for i, (r, t) in enumerate(zip(self.raw_ids, self.node_types))}
        self._degrees = np.diff(self.indptr)

    @property
    def num_nodes(self) -> int:
        return len(self.raw_ids)

    @property
    def num_edges(self) -> int:
        return int(self.indices.shape[0] // 2)

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def index_of(self, raw: str, node_type: NodeType) -> int:
        try:
            return self._lookup[(node_type, raw)]
        except KeyError:
            raise KeyError(f"no {node_type.value} node {raw!r}") from None

    def nodes_of_type(self, node_type: NodeType) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.node_types) if t == node_type], dtype=np.int64)

    def candidates(self) -> np.ndarray:
        return np.flatnonzero(self.candidate_flags)

    def segment_ids(self) -> np.ndarray:
        """Source node for each CSR entry, i.e. the row each neighbor belongs to."""
        return np.repeat(np.arange(self.num_nodes), self._degrees)

    def without_edges(self, edge_type: str, removed: Iterable[tuple[int, int]]) -> "HeteroGraph":
        """Copy of the graph with some edges of one type dropped."""
        drop = {(int(a), int(b)) for a, b in removed}
        kept = {}
        for tag, arr in self.edge_sets.items():
            if tag == edge_type:
                mask = np.array([(int(a), int(b)) not in drop for a, b in arr], dtype=bool)
                kept[tag] = arr[mask] if len(arr) else arr
            else:
                kept[tag] = arr
        indptr, indices = _csr_from_pairs(self.num_nodes, kept.values())
        return HeteroGraph(list(self.raw_ids), list(self.node_types), indptr, indices, kept,
                           self.candidate_flags.copy())

    def same_as(self, other: "HeteroGraph") -> bool:
        if self.raw_ids != other.raw_ids or self.node_types != other.node_types:
            return False
        if not (np.array_equal(self.indptr, other.indptr) and np.array_equal(self.indices, other.indices)):
            return False
        if not np.array_equal(self.candidate_flags, other.candidate_flags):
            return False
        if set(self.edge_sets) != set(other.edge_sets):
            return False
        return all(np.array_equal(self.edge_sets[k], other.edge_sets[k]) for k in self.edge_sets)


def _csr_from_pairs(n: int, pair_arrays: Iterable[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    arrays = [a for a in pair_arrays if len(a)]
    if not arrays:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = np.concatenate(arrays).astype(np.int64)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    # Same undirected edge may appear under two tags only for malformed input;
    # dedup on the directed pair anyway.
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    if len(src) > 1:
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[keep], dst[keep]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst


def build_graph(nodes: Sequence[tuple[str, NodeType | str]],
                edges: Iterable[tuple[str, str, str]],
                candidates: Iterable[str] = ()) -> HeteroGraph:
    """Build a graph; indices follow node input order.

    Edge endpoints are resolved through the edge type tag, so ``SP`` edges
    look their first endpoint up among sellers and the second among products.
    Reversed endpoint order is accepted.
    """
    raw_ids: list[str] = []
    types: list[NodeType] = []
    lookup: dict[tuple[NodeType, str], int] = {}
    for raw, t in nodes:
        t = t if isinstance(t, NodeType) else NodeType.parse(t)
        key = (t, raw)
        if key in lookup:
            raise GraphBuildError(f"duplicate {t.value} node {raw!r}")
        lookup[key] = len(raw_ids)
        raw_ids.append(raw)
        types.append(t)

    seen: dict[str, set[tuple[int, int]]] = {}
    for a, b, tag in edges:
        if tag not in EDGE_TYPES:
            raise GraphBuildError(f"unknown edge type {tag!r}")
        ta, tb = EDGE_TYPES[tag]
        ia, ib = lookup.get((ta, a)), lookup.get((tb, b))
        if ia is None or ib is None:
            # accept (product, seller) style reversed input
            ra, rb = lookup.get((ta, b)), lookup.get((tb, a))
            if ra is not None and rb is not None:
                ia, ib = ra, rb
            else:
                missing = a if lookup.get((ta, a)) is None and lookup.get((tb, a)) is None else b
                raise GraphBuildError(f"edge ({a!r}, {b!r}, {tag}) names unknown node {missing!r}")
        if ia == ib:
            raise GraphBuildError(f"self-loop on {a!r}")
        if tag == "PP" and ia > ib:
            ia, ib = ib, ia
        seen.setdefault(tag, set()).add((ia, ib))

    edge_sets = {tag: np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2) for tag, pairs in sorted(seen.items())}
    indptr, indices = _csr_from_pairs(len(raw_ids), edge_sets.values())

    flags = np.zeros(len(raw_ids), dtype=bool)
    for raw in candidates:
        idx = lookup.get((NodeType.PRODUCT, raw))
        if idx is not None:
            flags[idx] = True
    return HeteroGraph(raw_ids, types, indptr, indices, edge_sets, flags, lookup)


def neighbors(g: HeteroGraph, v: int) -> np.ndarray:
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node index {v} out of range for {g.num_nodes} nodes")
    return g.indices[g.indptr[v]:g.indptr[v + 1]]


def degree(g: HeteroGraph, v: int) -> int:
    return int(len(neighbors(g, v)))


# --- text formats ------------------------------------------------------------

def _data_lines(path) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def read_nodes(path) -> list[tuple[str, NodeType]]:
    out = []
    for lineno, cols in _data_lines(path):
        if len(cols) != 2:
            raise GraphBuildError(f"{path}:{lineno}: expected raw_id<TAB>node_type")
        out.append((cols[0], NodeType.parse(cols[1])))
    return out


def read_edges(path) -> list[tuple[str, str, str]]:
    out = []
    for lineno, cols in _data_lines(path):
        if len(cols) != 3:
            raise GraphBuildError(f"{path}:{lineno}: expected src<TAB>dst<TAB>edge_type")
        out.append((cols[0], cols[1], cols[2]))
    return out


def read_id_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def write_nodes(path, nodes: Iterable[tuple[str, NodeType]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for raw, t in nodes:
            fh.write(f"{raw}\t{NodeType(t).value}\n")


def write_edges(path, edges: Iterable[tuple[str, str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b, tag in edges:
            fh.write(f"{a}\t{b}\t{tag}\n")


def graph_edge_list(g: HeteroGraph) -> list[tuple[str, str, str]]:
    return [(g.raw_ids[a], g.raw_ids[b], tag) for tag, arr in g.edge_sets.items() for a, b in arr]


# --- binary snapshot ---------------------------------------------------------

SNAPSHOT_MAGIC = b"WAMLGRPH"
SNAPSHOT_VERSION = 1


def _write_str(buf, s: str) -> None:
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def _read_str(buf) -> str:
    (n,) = struct.unpack("<I", buf.read(4))
    return buf.read(n).decode("utf-8")


def save_graph(g: HeteroGraph, path, metadata: dict | None = None) -> None:
    """Write the snapshot: magic, version, metadata JSON, then LE arrays."""
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<I", SNAPSHOT_VERSION))
    _write_str(buf, json.dumps(metadata or {}, sort_keys=True))
    n = g.num_nodes
    buf.write(struct.pack("<QQ", n, len(g.indices)))
    buf.write(g.indptr.astype("<u8").tobytes())
    buf.write(g.indices.astype("<u4").tobytes())
    buf.write(np.array([_TYPE_CODES[t] for t in g.node_types], dtype="u1").tobytes())
    buf.write(g.candidate_flags.astype("u1").tobytes())
    for raw in g.raw_ids:
        _write_str(buf, raw)
    buf.write(struct.pack("<I", len(g.edge_sets)))
    for tag, arr in g.edge_sets.items():
        _write_str(buf, tag)
        buf.write(struct.pack("<Q", len(arr)))
        buf.write(arr.astype("<u4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_graph(path) -> tuple[HeteroGraph, dict]:
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.read(8) != SNAPSHOT_MAGIC:
        raise GraphBuildError(f"{path}: not a graph snapshot")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != SNAPSHOT_VERSION:
        raise GraphBuildError(f"{path}: unsupported snapshot version {version}")
    metadata = json.loads(_read_str(buf))
    n, nnz = struct.unpack("<QQ", buf.read(16))
    indptr = np.frombuffer(buf.read(8 * (n + 1)), dtype="<u8").astype(np.int64)
    indices = np.frombuffer(buf.read(4 * nnz), dtype="<u4").astype(np.int64)
    codes = np.frombuffer(buf.read(n), dtype="u1")
    flags = np.frombuffer(buf.read(n), dtype="u1").astype(bool)
    raw_ids = [_read_str(buf) for _ in range(n)]
    (n_sets,) = struct.unpack("<I", buf.read(4))
    edge_sets = {}
    for _ in range(n_sets):
        tag = _read_str(buf)
        (m,) = struct.unpack("<Q", buf.read(8))
        edge_sets[tag] = np.frombuffer(buf.read(8 * m), dtype="<u4").astype(np.int64).reshape(-1, 2)
    types = [_CODE_TYPES[int(c)] for c in codes]
    return HeteroGraph(raw_ids, types, indptr, indices, edge_sets, flags), metadata
