"""Sparse adjacency tensors for directed, weighted, nonuniform hypergraphs.

Indices are 0-based in memory. The JSON spec format uses 1-based indices
and is converted on load/dump.
"""
from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal, NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

TGDB_TOLERANCE = 1e-9


class SpecError(ValueError):
    """Malformed or invalid hypergraph spec (file or in-memory)."""


class StructuralError(ValueError):
    """The tensor structure admits no balanced reference state."""


class DisconnectedSupportError(StructuralError):
    """Support graph is not strongly connected, so the equilibrium is not unique."""


@dataclass(frozen=True)
class HyperEdgeEntry:
    order: int
    head: int
    tail_primary: int
    tail_rest: tuple[int, ...]
    weight: float

    @property
    def key(self) -> tuple[int, int, int, tuple[int, ...]]:
        return (self.order, self.head, self.tail_primary, self.tail_rest)

    @property
    def reverse_key(self) -> tuple[int, int, int, tuple[int, ...]]:
        return (self.order, self.tail_primary, self.head, self.tail_rest)


class _Layer(NamedTuple):
    """Array form of all entries of one order."""

    heads: np.ndarray  # (m,)
    tails: np.ndarray  # (m,)
    factors: np.ndarray  # (m, order): tail_primary followed by tail_rest
    weights: np.ndarray  # (m,)


@dataclass(frozen=True)
class HyperTensorSet:
    """Collection of coordinate-format adjacency tensors, one layer per order.

    ``direction=True`` marks a signed perturbation direction: weights may be
    negative. Every other invariant is still enforced.
    """

    n: int
    entries: tuple[HyperEdgeEntry, ...] = ()
    direction: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.n < 1:
            raise SpecError(f"node count must be positive, got {self.n}")
        index = {}
        for pos, e in enumerate(self.entries):
            where = f"entry {pos} (order={e.order}, head={e.head}, tail={e.tail_primary}, rest={e.tail_rest})"
            if e.order < 1:
                raise SpecError(f"{where}: order must be >= 1")
            if len(e.tail_rest) != e.order - 1:
                raise SpecError(f"{where}: expected {e.order - 1} extra tail indices, got {len(e.tail_rest)}")
            for j in (e.head, e.tail_primary, *e.tail_rest):
                if not 0 <= j < self.n:
                    raise SpecError(f"{where}: index {j} out of range for n={self.n}")
            if e.head == e.tail_primary:
                raise SpecError(f"{where}: head equals primary tail")
            if not np.isfinite(e.weight):
                raise SpecError(f"{where}: weight is not finite")
            if e.weight < 0 and not self.direction:
                raise SpecError(f"{where}: negative weight {e.weight}")
            if e.key in index:
                raise SpecError(f"{where}: duplicate key (first seen at entry {index[e.key]})")
            index[e.key] = pos
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.entries)

    @property
    def orders(self) -> list[int]:
        return sorted({e.order for e in self.entries})

    @property
    def max_order(self) -> int:
        return max(self.orders, default=0)

    def weight(self, order: int, head: int, tail: int, rest: tuple[int, ...] = ()) -> float:
        pos = self._index.get((order, head, tail, tuple(rest)))
        return 0.0 if pos is None else self.entries[pos].weight

    def frobenius_norm(self) -> float:
        return float(np.sqrt(sum(e.weight ** 2 for e in self.entries)))

    @cached_property
    def layers(self) -> dict[int, _Layer]:
        groups: dict[int, list[HyperEdgeEntry]] = defaultdict(list)
        for e in self.entries:
            groups[e.order].append(e)
        out = {}
        for r, es in sorted(groups.items()):
            out[r] = _Layer(
                heads=np.array([e.head for e in es], dtype=np.intp),
                tails=np.array([e.tail_primary for e in es], dtype=np.intp),
                factors=np.array([(e.tail_primary, *e.tail_rest) for e in es], dtype=np.intp).reshape(len(es), r),
                weights=np.array([e.weight for e in es], dtype=float),
            )
        return out

    def scaled(self, factor: float) -> "HyperTensorSet":
        entries = [HyperEdgeEntry(e.order, e.head, e.tail_primary, e.tail_rest, factor * e.weight) for e in self.entries]
        return HyperTensorSet(self.n, entries, direction=self.direction or factor < 0)

    def combine(self, other: "HyperTensorSet", scale: float = 1.0, direction: bool | None = None) -> "HyperTensorSet":
        """Coefficient-wise ``self + scale * other``; exact zeros are dropped."""
        if other.n != self.n:
            raise SpecError(f"node count mismatch: {self.n} vs {other.n}")
        acc: dict = {}
        for e in self.entries:
            acc[e.key] = e.weight
        for e in other.entries:
            acc[e.key] = acc.get(e.key, 0.0) + scale * e.weight
        entries = [HyperEdgeEntry(r, i, k, rest, w) for (r, i, k, rest), w in acc.items() if w != 0.0]
        if direction is None:
            direction = self.direction or other.direction or scale < 0
        return HyperTensorSet(self.n, entries, direction=direction)

    def __add__(self, other: "HyperTensorSet") -> "HyperTensorSet":
        return self.combine(other)


@dataclass(frozen=True)
class SupportGraph:
    n: int
    directed_edges: frozenset[tuple[int, int]]  # (tail k, head i)

    @property
    def undirected_edges(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(e) for e in self.directed_edges)

    def laplacian(self) -> np.ndarray:
        """Unweighted Laplacian of the symmetrized support."""
        L = np.zeros((self.n, self.n))
        for e in self.undirected_edges:
            i, k = tuple(e)
            L[i, k] -= 1.0
            L[k, i] -= 1.0
            L[i, i] += 1.0
            L[k, k] += 1.0
        return L


@dataclass(frozen=True)
class TgdbReport:
    holds: bool
    reference: np.ndarray
    violations: list[tuple[int, int, int, tuple[int, ...], float]]
    max_residual: float


def _parse_entries(doc: dict) -> tuple[int, list[HyperEdgeEntry]]:
    if not isinstance(doc, dict) or "n" not in doc or "tensors" not in doc:
        raise SpecError('top level must be an object with "n" and "tensors"')
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise SpecError(f'"n" must be an integer, got {n!r}')
    entries = []
    for t_pos, tensor in enumerate(doc["tensors"]):
        try:
            order = tensor["order"]
            raw_entries = tensor["entries"]
        except (TypeError, KeyError) as exc:
            raise SpecError(f"tensors[{t_pos}]: missing {exc}") from None
        for e_pos, raw in enumerate(raw_entries):
            where = f"tensors[{t_pos}].entries[{e_pos}]"
            try:
                head = raw["head"]
                tail = list(raw["tail"])
                weight = raw["weight"]
            except (TypeError, KeyError) as exc:
                raise SpecError(f"{where}: missing {exc}") from None
            if not all(isinstance(j, int) and not isinstance(j, bool) for j in [head, *tail]):
                raise SpecError(f"{where}: indices must be integers")
            if not isinstance(weight, (int, float)) or isinstance(weight, bool):
                raise SpecError(f"{where}: weight must be a number")
            if len(tail) != order:
                raise SpecError(f"{where}: order {order} needs {order} tail indices, got {len(tail)}")
            for j in [head, *tail]:
                if not 1 <= j <= n:
                    raise SpecError(f"{where}: index {j} out of range 1..{n}")
            if weight < 0:
                raise SpecError(f"{where}: negative weight {weight}")
            entries.append(HyperEdgeEntry(order, head - 1, tail[0] - 1, tuple(j - 1 for j in tail[1:]), float(weight)))
    return n, entries


def parse_spec(doc: dict) -> HyperTensorSet:
    n, entries = _parse_entries(doc)
    try:
        return HyperTensorSet(n, entries)
    except SpecError as exc:
        raise SpecError(f"invalid spec: {exc}") from None


def load_spec(path: str | Path) -> HyperTensorSet:
    """Read a hypergraph spec file (JSON, 1-based indices)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from None
    return parse_spec(doc)


def spec_document(tensors: HyperTensorSet) -> dict:
    tensors_out = []
    for layer in decompose_layers(tensors):
        r = layer.entries[0].order
        tensors_out.append({
            "order": r,
            "entries": [
                {"head": e.head + 1, "tail": [e.tail_primary + 1, *(j + 1 for j in e.tail_rest)], "weight": e.weight}
                for e in layer.entries
            ],
        })
    return {"n": tensors.n, "tensors": tensors_out}


def dump_spec(tensors: HyperTensorSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_document(tensors), indent=1) + "\n", encoding="utf-8")


def check_tgdb(tensors: HyperTensorSet, v, tol: float = TGDB_TOLERANCE) -> TgdbReport:
    """Check v_k a_{ikI} = v_i a_{kiI} entrywise, layer by layer.

    A missing reverse entry counts as weight zero. Each unordered pair is
    reported once.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (tensors.n,) or np.any(v <= 0) or abs(v.sum() - 1.0) > 1e-12:
        raise ValueError("reference must be a strictly positive unit-mass vector of length n")
    seen = set()
    violations = []
    max_residual = 0.0
    for e in tensors.entries:
        r, i, k, rest = e.key
        canon = (r, min(i, k), max(i, k), rest)
        if canon in seen:
            continue
        seen.add(canon)
        residual = abs(v[k] * e.weight - v[i] * tensors.weight(r, k, i, rest))
        max_residual = max(max_residual, residual)
        if residual > tol:
            violations.append((r, i, k, rest, residual))
    return TgdbReport(holds=max_residual <= tol, reference=v, violations=violations, max_residual=max_residual)


def support_graph(tensors: HyperTensorSet) -> SupportGraph:
    edges = frozenset((e.tail_primary, e.head) for e in tensors.entries if e.weight > 0)
    return SupportGraph(tensors.n, edges)


def is_connected(g: SupportGraph, mode: Literal["undirected", "strong"] = "strong") -> bool:
    if g.n == 1:
        return True
    if not g.directed_edges:
        return False
    k, i = zip(*g.directed_edges)
    adj = coo_matrix((np.ones(len(k)), (k, i)), shape=(g.n, g.n))
    if mode == "strong":
        ncomp, _ = connected_components(adj, directed=True, connection="strong")
    elif mode == "undirected":
        ncomp, _ = connected_components(adj, directed=False)
    else:
        raise ValueError(f"unknown connectivity mode {mode!r}")
    return ncomp == 1


def decompose_layers(tensors: HyperTensorSet) -> list[HyperTensorSet]:
    by_order: dict[int, list[HyperEdgeEntry]] = defaultdict(list)
    for e in tensors.entries:
        by_order[e.order].append(e)
    return [HyperTensorSet(tensors.n, by_order[r], direction=tensors.direction) for r in sorted(by_order)]


def union_layers(layers: Iterable[HyperTensorSet]) -> HyperTensorSet:
    layers = list(layers)
    if not layers:
        raise ValueError("need at least one layer")
    entries = [e for layer in layers for e in layer.entries]
    return HyperTensorSet(layers[0].n, entries, direction=any(layer.direction for layer in layers))


def balance_ratios(tensors: HyperTensorSet) -> np.ndarray:
    """Reference vector from propagating pairwise balance ratios over a BFS tree.

    Not normalized and not validated; callers check the result.
    """
    n = tensors.n
    ratio: dict[tuple[int, int], float] = {}
    for e in tensors.entries:
        if e.weight <= 0:
            continue
        back = tensors.weight(e.order, e.tail_primary, e.head, e.tail_rest)
        if back <= 0:
            raise StructuralError(
                f"entry order={e.order} head={e.head} tail={e.tail_primary} rest={e.tail_rest} "
                "has no positive reverse entry; no positive balanced reference exists"
            )
        # v_head / v_tail = a_{head,tail,I} / a_{tail,head,I}
        ratio.setdefault((e.head, e.tail_primary), e.weight / back)
    neighbors: dict[int, list[int]] = defaultdict(list)
    for i, k in ratio:
        neighbors[k].append(i)
    pi = np.full(n, np.nan)
    pi[0] = 1.0
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for i in sorted(neighbors[k]):
            if np.isnan(pi[i]):
                pi[i] = pi[k] * ratio[(i, k)]
                queue.append(i)
    return pi
