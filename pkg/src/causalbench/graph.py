"""Graph representation, random DAG generation, and graph predicates.

Graphs are immutable once constructed, so they can be shared freely across
sweep workers. Nodes are integers 0..p-1. A pair of nodes carries at most
one mark: a directed edge (src, dst) or an undirected edge {a, b}.
"""

from __future__ import annotations

import csv
import heapq
import io
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ParseError
from .rng import Rng


class GraphKind(str, Enum):
    DAG = "DAG"
    CPDAG = "CPDAG"
    PDAG = "PDAG"
    MIXED = "MIXED"


@dataclass(frozen=True)
class Graph:
    """Mixed graph over p nodes with directed and undirected edges.

    kind is validated at construction: DAG requires all-directed acyclic
    edges, CPDAG/PDAG require the directed part to be acyclic. MIXED
    accepts anything (including directed cycles, as emitted by pairwise
    learners).
    """

    p: int
    directed: frozenset = field(default_factory=frozenset)
    undirected: frozenset = field(default_factory=frozenset)
    kind: GraphKind = GraphKind.MIXED

    def __post_init__(self):
        if self.p < 1:
            raise ContractError("graph needs at least one node")
        directed = frozenset((int(j), int(k)) for j, k in self.directed)
        undirected = frozenset(
            (min(int(j), int(k)), max(int(j), int(k))) for j, k in self.undirected
        )
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)
        object.__setattr__(self, "kind", GraphKind(self.kind))
        for j, k in directed | undirected:
            if j == k:
                raise ContractError(f"self-loop on node {j}")
            if not (0 <= j < self.p and 0 <= k < self.p):
                raise ContractError(f"edge ({j},{k}) outside 0..{self.p - 1}")
        for j, k in directed:
            if (k, j) in directed:
                raise ContractError(f"both {j}->{k} and {k}->{j} present")
            if (min(j, k), max(j, k)) in undirected:
                raise ContractError(f"pair ({j},{k}) marked both directed and undirected")
        if self.kind == GraphKind.DAG:
            if undirected:
                raise ContractError("DAG kind cannot carry undirected edges")
            if not _directed_part_acyclic(self.p, directed):
                raise ContractError("directed cycle in graph declared as DAG")
        elif self.kind in (GraphKind.CPDAG, GraphKind.PDAG):
            if not _directed_part_acyclic(self.p, directed):
                raise ContractError(f"directed cycle in graph declared as {self.kind.value}")

    # -- queries -----------------------------------------------------------

    @cached_property
    def _parents(self) -> dict:
        out = {j: set() for j in range(self.p)}
        for j, k in self.directed:
            out[k].add(j)
        return out

    @cached_property
    def _children(self) -> dict:
        out = {j: set() for j in range(self.p)}
        for j, k in self.directed:
            out[j].add(k)
        return out

    @cached_property
    def _und_neighbors(self) -> dict:
        out = {j: set() for j in range(self.p)}
        for j, k in self.undirected:
            out[j].add(k)
            out[k].add(j)
        return out

    def parents(self, k: int) -> frozenset:
        return frozenset(self._parents[k])

    def children(self, j: int) -> frozenset:
        return frozenset(self._children[j])

    def undirected_neighbors(self, j: int) -> frozenset:
        return frozenset(self._und_neighbors[j])

    def adjacent(self, j: int, k: int) -> bool:
        return (
            (j, k) in self.directed
            or (k, j) in self.directed
            or (min(j, k), max(j, k)) in self.undirected
        )

    @property
    def edge_count(self) -> int:
        return len(self.directed) + len(self.undirected)

    def skeleton_neighbors(self, j: int) -> frozenset:
        return frozenset(self._parents[j] | self._children[j] | self._und_neighbors[j])

    def to_adjacency(self) -> np.ndarray:
        """0/1 matrix, row = source; undirected edges set both entries."""
        a = np.zeros((self.p, self.p), dtype=np.int8)
        for j, k in self.directed:
            a[j, k] = 1
        for j, k in self.undirected:
            a[j, k] = 1
            a[k, j] = 1
        return a

    @staticmethod
    def from_adjacency(a: np.ndarray, kind: GraphKind | str = GraphKind.MIXED) -> "Graph":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractError("adjacency matrix must be square")
        p = a.shape[0]
        directed, undirected = set(), set()
        for j in range(p):
            for k in range(j + 1, p):
                fwd, bwd = a[j, k] != 0, a[k, j] != 0
                if fwd and bwd:
                    undirected.add((j, k))
                elif fwd:
                    directed.add((j, k))
                elif bwd:
                    directed.add((k, j))
        return Graph(p, frozenset(directed), frozenset(undirected), kind)

    # -- serialization -----------------------------------------------------

    def to_edgelist(self) -> str:
        lines = [f"p={self.p}"]
        for j, k in sorted(self.directed):
            lines.append(f"{j} {k} -->")
        for j, k in sorted(self.undirected):
            lines.append(f"{j} {k} ---")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_edgelist(text: str, kind: GraphKind | str = GraphKind.MIXED) -> "Graph":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("p="):
            raise ParseError("edge list must start with a 'p=<count>' header")
        try:
            p = int(lines[0][2:])
        except ValueError as exc:
            raise ParseError(f"bad node count in header {lines[0]!r}") from exc
        directed, undirected = set(), set()
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            if len(parts) != 3 or parts[2] not in ("-->", "---"):
                raise ParseError(f"line {lineno}: expected 'j k -->' or 'j k ---', got {ln!r}")
            try:
                j, k = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: non-integer node id in {ln!r}") from exc
            (directed if parts[2] == "-->" else undirected).add((j, k))
        return Graph(p, frozenset(directed), frozenset(undirected), kind)

    def save(self, path):
        Path(path).write_text(self.to_edgelist())

    @staticmethod
    def load(path, kind: GraphKind | str = GraphKind.MIXED) -> "Graph":
        return Graph.from_edgelist(Path(path).read_text(), kind)

    def to_adjacency_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        for row in self.to_adjacency():
            writer.writerow([int(v) for v in row])
        return buf.getvalue()

    @staticmethod
    def from_adjacency_csv(text: str, kind: GraphKind | str = GraphKind.MIXED) -> "Graph":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        parsed = []
        for lineno, row in enumerate(rows, start=1):
            out_row = []
            for colno, cell in enumerate(row, start=1):
                try:
                    value = float(cell)
                except ValueError as exc:
                    raise ParseError(
                        f"adjacency CSV line {lineno}, column {colno}: "
                        f"non-numeric entry {cell.strip()!r}"
                    ) from exc
                if value not in (0.0, 1.0):
                    raise ParseError(
                        f"adjacency CSV line {lineno}, column {colno}: "
                        f"entries must be 0 or 1, got {cell.strip()!r}"
                    )
                out_row.append(int(value))
            parsed.append(out_row)
        return Graph.from_adjacency(np.array(parsed), kind)


@dataclass(frozen=True)
class WeightedAdjacency:
    """Real-valued p x p edge-weight matrix; w[j, k] != 0 means edge j->k."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ContractError("weight matrix must be square")
        if np.any(np.diag(w) != 0.0):
            raise ContractError("weight matrix diagonal must be zero")
        object.__setattr__(self, "w", w)
        self.w.setflags(write=False)

    @property
    def p(self) -> int:
        return self.w.shape[0]

    def to_binary(self, threshold: float) -> Graph:
        """Graph with edge j->k iff |w[j,k]| > threshold; DAG kind if acyclic.

        A pair whose weights exceed the threshold in both directions is a
        single undirected mark (two opposed ordered pairs denote an
        undirected edge; the graph type stores that as one mark).
        """
        directed, undirected = set(), set()
        for j in range(self.p):
            for k in range(j + 1, self.p):
                fwd = abs(self.w[j, k]) > threshold
                bwd = abs(self.w[k, j]) > threshold
                if fwd and bwd:
                    undirected.add((j, k))
                elif fwd:
                    directed.add((j, k))
                elif bwd:
                    directed.add((k, j))
        if not undirected and _directed_part_acyclic(self.p, directed):
            kind = GraphKind.DAG
        else:
            kind = GraphKind.MIXED
        return Graph(self.p, frozenset(directed), frozenset(undirected), kind)


# -- predicates -------------------------------------------------------------


def _directed_part_acyclic(p: int, directed) -> bool:
    children = {j: [] for j in range(p)}
    for j, k in directed:
        children[j].append(k)
    color = [0] * p  # 0 white, 1 grey, 2 black
    for root in range(p):
        if color[root] != 0:
            continue
        stack = [(root, iter(children[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 1:
                    return False
                if color[nxt] == 0:
                    color[nxt] = 1
                    stack.append((nxt, iter(children[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                stack.pop()
    return True


def is_acyclic(g: Graph) -> bool:
    """True iff the all-directed graph g has no directed cycle."""
    if g.undirected:
        raise ContractError("is_acyclic expects a fully directed graph")
    return _directed_part_acyclic(g.p, g.directed)


def topological_order(g: Graph) -> list[int]:
    """Parents-first ordering; ties broken by ascending node index."""
    if g.undirected or not _directed_part_acyclic(g.p, g.directed):
        raise ContractError("topological_order requires a DAG")
    indegree = [0] * g.p
    for _, k in g.directed:
        indegree[k] += 1
    ready = [j for j in range(g.p) if indegree[j] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        j = heapq.heappop(ready)
        order.append(j)
        for c in sorted(g._children[j]):
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    return order


def d_separated(g: Graph, j: int, k: int, z) -> bool:
    """d-separation of j and k given set z, by active-trail reachability."""
    z = frozenset(z)
    if g.kind != GraphKind.DAG:
        raise ContractError("d_separated requires a DAG")
    if j == k:
        raise ContractError("d_separated needs distinct endpoints")
    if j in z or k in z:
        raise ContractError("endpoints may not appear in the conditioning set")

    # Ancestors of z (inclusive), needed for the collider-opening rule.
    anc = set(z)
    frontier = deque(z)
    while frontier:
        node = frontier.popleft()
        for par in g._parents[node]:
            if par not in anc:
                anc.add(par)
                frontier.append(par)

    # States are (node, direction of arrival): "up" = via edge into node's
    # children side (trail arrived from a child), "down" = arrived from a parent.
    start = [(j, "up")]
    seen = set(start)
    frontier = deque(start)
    while frontier:
        node, direction = frontier.popleft()
        if node == k and node != j:
            return False
        moves = []
        if direction == "up":
            # Arrived from a child: may continue to parents and to children.
            if node not in z:
                moves += [(par, "up") for par in g._parents[node]]
                moves += [(ch, "down") for ch in g._children[node]]
        else:
            # Arrived from a parent: children always; parents only if the
            # collider at node is opened by conditioning on node or a descendant.
            if node not in z:
                moves += [(ch, "down") for ch in g._children[node]]
            if node in anc:
                moves += [(par, "up") for par in g._parents[node]]
        for state in moves:
            if state not in seen:
                seen.add(state)
                frontier.append(state)
    return True


# -- CPDAG machinery ---------------------------------------------------------


def _apply_meek_rules(p: int, mark: np.ndarray) -> None:
    """Close a partially directed graph under Meek rules R1-R4, in place.

    mark[j, k] == 1 with mark[k, j] == 0 encodes j->k; both 1 encodes j-k.
    """

    def adj(a, b):
        return mark[a, b] or mark[b, a]

    def und(a, b):
        return mark[a, b] and mark[b, a]

    def arrow(a, b):
        return mark[a, b] and not mark[b, a]

    changed = True
    while changed:
        changed = False
        for a in range(p):
            for b in range(p):
                if not und(a, b):
                    continue
                orient = False
                # R1: c->a, a-b, c not adjacent to b  =>  a->b
                for c in range(p):
                    if arrow(c, a) and not adj(c, b) and c != b:
                        orient = True
                        break
                # R2: a->c->b with a-b  =>  a->b
                if not orient:
                    for c in range(p):
                        if arrow(a, c) and arrow(c, b):
                            orient = True
                            break
                # R3: a-c->b and a-d->b with c,d non-adjacent  =>  a->b
                if not orient:
                    into_b = [c for c in range(p) if c not in (a, b) and und(a, c) and arrow(c, b)]
                    for c, d in combinations(into_b, 2):
                        if not adj(c, d):
                            orient = True
                            break
                # R4: a-c (any adjacency), c->d, d->b, c,b non-adjacent  =>  a->b
                if not orient:
                    for c in range(p):
                        if c in (a, b) or not adj(a, c) or adj(c, b):
                            continue
                        for d in range(p):
                            if d not in (a, b, c) and arrow(c, d) and arrow(d, b):
                                orient = True
                                break
                        if orient:
                            break
                if orient:
                    mark[b, a] = 0
                    changed = True


def cpdag_of(g: Graph) -> Graph:
    """CPDAG of the Markov equivalence class containing DAG g.

    Keeps the skeleton, orients v-structure edges, then closes under the
    Meek rules; everything else is left undirected.
    """
    if g.kind != GraphKind.DAG:
        raise ContractError("cpdag_of requires a DAG")
    p = g.p
    mark = np.zeros((p, p), dtype=np.int8)
    for j, k in g.directed:
        mark[j, k] = 1
        mark[k, j] = 1
    # v-structures a->m<-b with a,b non-adjacent keep their orientation
    for m in range(p):
        for a, b in combinations(sorted(g._parents[m]), 2):
            if not g.adjacent(a, b):
                mark[m, a] = 0
                mark[m, b] = 0
    _apply_meek_rules(p, mark)
    directed, undirected = set(), set()
    for j in range(p):
        for k in range(j + 1, p):
            fwd, bwd = mark[j, k], mark[k, j]
            if fwd and bwd:
                undirected.add((j, k))
            elif fwd:
                directed.add((j, k))
            elif bwd:
                directed.add((k, j))
    return Graph(p, frozenset(directed), frozenset(undirected), GraphKind.CPDAG)


# -- random graph generators -------------------------------------------------


def random_dag_er(p: int, d: float, rng: Rng) -> Graph:
    """Erdos-Renyi style DAG with exactly round(d*p) edges.

    Draws a uniform node permutation, samples the edge pairs uniformly
    without replacement, and orients each from the earlier to the later
    node under the permutation (acyclic by construction).
    """
    if p < 2:
        raise ConfigError("random_dag_er needs p >= 2")
    m = int(round(d * p))
    max_edges = p * (p - 1) // 2
    if m > max_edges:
        raise ConfigError(f"edge budget {m} exceeds maximum {max_edges} for p={p}")
    order = rng.permutation(p)
    rank = [0] * p
    for pos, node in enumerate(order):
        rank[node] = pos
    pairs = list(combinations(range(p), 2))
    chosen = rng.sample_without_replacement(len(pairs), m)
    directed = set()
    for idx in chosen:
        a, b = pairs[idx]
        directed.add((a, b) if rank[a] < rank[b] else (b, a))
    return Graph(p, frozenset(directed), frozenset(), GraphKind.DAG)


def random_dag_sf(p: int, d: int, rng: Rng) -> Graph:
    """Scale-free DAG by Barabasi-Albert preferential attachment.

    Nodes arrive in index order; each new node i >= d attaches d edges
    i->target to distinct earlier nodes, chosen degree-proportionally
    (the first arrival connects to all d founder nodes). Edges point from
    newer to older nodes, so the result is acyclic with d*(p-d) edges.
    """
    d = int(d)
    if d < 1:
        raise ConfigError("random_dag_sf needs d >= 1")
    if d >= p:
        raise ConfigError(f"random_dag_sf needs p > d (got p={p}, d={d})")
    directed = set()
    endpoint_pool: list[int] = []  # node repeated once per incident edge
    for i in range(d, p):
        if not endpoint_pool:
            targets = list(range(d))
        else:
            targets = []
            seen = set()
            while len(targets) < d:
                cand = endpoint_pool[rng.randbelow(len(endpoint_pool))]
                if cand not in seen:
                    seen.add(cand)
                    targets.append(cand)
        for t in targets:
            directed.add((i, t))
        endpoint_pool.extend(targets)
        endpoint_pool.extend([i] * d)
    return Graph(p, frozenset(directed), frozenset(), GraphKind.DAG)
