"""Greedy equivalence search over CPDAG states with the Gaussian BIC score.

Forward phase: repeatedly apply the single-edge insertion with the largest
positive local score gain. Backward phase: greedy deletions until no gain.
Operator validity and score changes follow the classic insert/delete
conditions; after each applied operator the state is re-completed by
extending the PDAG to a DAG and recomputing its CPDAG.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..errors import ContractError, NumericalError
from ..graph import Graph, GraphKind, cpdag_of
from ..sem import Dataset
from ..stats import bic_score
from . import AlgorithmDef, HyperparameterSpace, LearnOutcome, ParamSpec, register

_SUBSET_CAP = 12  # enumerate 2^k candidate subsets, truncated at this many bits


class _State:
    """Mutable PDAG mark matrix with the neighborhood queries GES needs."""

    def __init__(self, p: int):
        self.p = p
        self.mark = np.zeros((p, p), dtype=np.int8)

    def arrow(self, a, b):
        return bool(self.mark[a, b] and not self.mark[b, a])

    def und(self, a, b):
        return bool(self.mark[a, b] and self.mark[b, a])

    def adjacent(self, a, b):
        return bool(self.mark[a, b] or self.mark[b, a])

    def parents(self, y):
        return {x for x in range(self.p) if self.arrow(x, y)}

    def neighbors(self, y):
        return {x for x in range(self.p) if self.und(x, y)}

    def adjacencies(self, y):
        return {x for x in range(self.p) if self.adjacent(x, y)}

    def na(self, y, x):
        """Undirected neighbors of y that are adjacent to x."""
        return {v for v in self.neighbors(y) if self.adjacent(v, x)}

    def is_clique(self, nodes):
        return all(self.adjacent(a, b) for a, b in combinations(sorted(nodes), 2))

    def blocks_all_semidirected(self, y, x, blocked):
        """True if every semi-directed path y ~> x hits the blocked set."""
        if y in blocked:
            return True
        seen = {y}
        stack = [y]
        while stack:
            v = stack.pop()
            for w in range(self.p):
                if self.mark[v, w] and w not in seen and w not in blocked:
                    if w == x:
                        return False
                    seen.add(w)
                    stack.append(w)
        return True

    def to_graph(self) -> Graph:
        directed, undirected = set(), set()
        for j in range(self.p):
            for k in range(j + 1, self.p):
                fwd, bwd = self.mark[j, k], self.mark[k, j]
                if fwd and bwd:
                    undirected.add((j, k))
                elif fwd:
                    directed.add((j, k))
                elif bwd:
                    directed.add((k, j))
        return Graph(self.p, frozenset(directed), frozenset(undirected), GraphKind.CPDAG)

    def load_graph(self, g: Graph):
        self.mark[:] = 0
        for j, k in g.directed:
            self.mark[j, k] = 1
        for j, k in g.undirected:
            self.mark[j, k] = 1
            self.mark[k, j] = 1


def pdag_to_dag(state: _State) -> Graph:
    """Consistent DAG extension of a PDAG (Dor-Tarsi peeling)."""
    p = state.p
    mark = state.mark.copy()
    alive = set(range(p))
    directed = set()
    for j in range(p):
        for k in range(p):
            if mark[j, k] and not mark[k, j]:
                directed.add((j, k))
    while alive:
        found = None
        for x in sorted(alive):
            out_edges = any(mark[x, w] and not mark[w, x] for w in alive if w != x)
            if out_edges:
                continue
            und_nb = [w for w in alive if w != x and mark[x, w] and mark[w, x]]
            adj_x = [w for w in alive if w != x and (mark[x, w] or mark[w, x])]
            ok = all(
                mark[n, other] or mark[other, n]
                for n in und_nb
                for other in adj_x
                if other != n
            )
            if ok:
                found = x
                break
        if found is None:
            raise NumericalError("PDAG admits no consistent extension")
        for w in alive:
            if w != found and mark[found, w] and mark[w, found]:
                directed.add((w, found))
        for w in alive:
            mark[found, w] = 0
            mark[w, found] = 0
        alive.discard(found)
    return Graph(p, frozenset(directed), frozenset(), GraphKind.DAG)


def _capped_subsets(items):
    items = sorted(items)[:_SUBSET_CAP]
    for r in range(len(items) + 1):
        yield from combinations(items, r)


class _ScoreCache:
    def __init__(self, ds: Dataset, penalty_discount: float):
        self.ds = ds
        self.pd = penalty_discount
        self.cache: dict = {}

    def local(self, node: int, parents) -> float:
        key = (node, frozenset(parents))
        if key not in self.cache:
            self.cache[key] = bic_score(self.ds, node, parents, self.pd).value
        return self.cache[key]


def _best_insertion(state: _State, scores: _ScoreCache):
    best = None
    for x in range(state.p):
        for y in range(state.p):
            if x == y or state.adjacent(x, y):
                continue
            na_yx = state.na(y, x)
            t0 = state.neighbors(y) - state.adjacencies(x)
            pa_y = state.parents(y)
            for t_set in _capped_subsets(t0):
                block = na_yx | set(t_set)
                if not state.is_clique(block):
                    continue
                if not state.blocks_all_semidirected(y, x, block):
                    continue
                base = block | pa_y
                try:
                    gain = scores.local(y, base | {x}) - scores.local(y, base)
                except (NumericalError, ContractError):
                    continue  # singular or oversized candidate parent set
                if gain > 0 and (best is None or gain > best[0] + 1e-12):
                    best = (gain, x, y, tuple(sorted(t_set)))
    return best


def _best_deletion(state: _State, scores: _ScoreCache):
    best = None
    for x in range(state.p):
        for y in range(state.p):
            if x == y or not (state.arrow(x, y) or state.und(x, y)):
                continue
            na_yx = state.na(y, x)
            pa_y = state.parents(y)
            for h_set in _capped_subsets(na_yx):
                keep = na_yx - set(h_set)
                if not state.is_clique(keep):
                    continue
                base = keep | (pa_y - {x})
                try:
                    gain = scores.local(y, base) - scores.local(y, base | {x})
                except (NumericalError, ContractError):
                    continue
                if gain > 0 and (best is None or gain > best[0] + 1e-12):
                    best = (gain, x, y, tuple(sorted(h_set)))
    return best


def _recomplete(state: _State):
    dag = pdag_to_dag(state)
    state.load_graph(cpdag_of(dag))


def fit(ds: Dataset, params: dict):
    if ds.n <= ds.p:
        raise ContractError(f"ges needs n > p for stable regressions (n={ds.n}, p={ds.p})")
    penalty_discount = params["penaltyDiscount"]
    state = _State(ds.p)
    scores = _ScoreCache(ds, penalty_discount)
    insertions = deletions = 0
    max_ops = 5 * ds.p * ds.p
    while insertions < max_ops:
        best = _best_insertion(state, scores)
        if best is None:
            break
        _, x, y, t_set = best
        state.mark[x, y] = 1
        state.mark[y, x] = 0
        for t in t_set:
            state.mark[t, y] = 1
            state.mark[y, t] = 0
        _recomplete(state)
        insertions += 1
    while deletions < max_ops:
        best = _best_deletion(state, scores)
        if best is None:
            break
        _, x, y, h_set = best
        state.mark[x, y] = 0
        state.mark[y, x] = 0
        for h in h_set:
            state.mark[y, h] = 1
            state.mark[h, y] = 0
            if state.und(x, h):
                state.mark[x, h] = 1
                state.mark[h, x] = 0
        _recomplete(state)
        deletions += 1
    graph = state.to_graph()
    return graph, {"insertions": insertions, "deletions": deletions, "scores": len(scores.cache)}


def finalize(ds: Dataset, state, post_params: dict) -> LearnOutcome:
    graph, diagnostics = state
    return LearnOutcome(graph=graph, weights=None, diagnostics=dict(diagnostics))


SPACE = HyperparameterSpace(
    algorithm="ges",
    params=(
        ParamSpec(
            name="penaltyDiscount",
            kind="float",
            grid=(0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5),
            default=2.0,
            sim_mean=1.5,
            stage="fit",
        ),
    ),
    fixed={"score": "gaussian-bic"},
)

register(AlgorithmDef(name="ges", space=SPACE, fit=fit, finalize=finalize))
