"""Independent brute-force oracles used to pin expected test values.

Everything here is deliberately written against the package's main code
paths: path enumeration instead of reachability, edit counting instead of
TP/FP accumulation, exhaustive DAG enumeration instead of Meek closure.
"""

from __future__ import annotations

from itertools import combinations, permutations, product


def splitmix64_reference(seed: int, count: int) -> list[int]:
    """Sequential big-int splitmix64, the textbook stateful formulation."""
    mask = (1 << 64) - 1
    out = []
    state = seed & mask
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


# -- d-separation by exhaustive path blocking --------------------------------


def _descendants(p, directed, v):
    seen = {v}
    stack = [v]
    while stack:
        node = stack.pop()
        for (a, b) in directed:
            if a == node and b not in seen:
                seen.add(b)
                stack.append(b)
    return seen


def d_separated_paths(p: int, directed: set, j: int, k: int, z: set) -> bool:
    """Enumerate every simple skeleton path j..k and test the blocking rules."""
    adjacency = {v: set() for v in range(p)}
    for a, b in directed:
        adjacency[a].add(b)
        adjacency[b].add(a)

    def path_active(path):
        for idx in range(1, len(path) - 1):
            prev, v, nxt = path[idx - 1], path[idx], path[idx + 1]
            collider = (prev, v) in directed and (nxt, v) in directed
            if collider:
                if not (_descendants(p, directed, v) & z):
                    return False
            else:
                if v in z:
                    return False
        return True

    stack = [[j]]
    while stack:
        path = stack.pop()
        last = path[-1]
        if last == k:
            if path_active(path):
                return False
            continue
        for nxt in adjacency[last]:
            if nxt not in path:
                stack.append(path + [nxt])
    return True


# -- exhaustive Markov equivalence classes ------------------------------------


def all_dags(p: int):
    """Every DAG on p labeled nodes, as a frozenset of directed pairs."""
    pairs = list(combinations(range(p), 2))
    for marks in product((0, 1, 2), repeat=len(pairs)):
        directed = set()
        for (a, b), m in zip(pairs, marks):
            if m == 1:
                directed.add((a, b))
            elif m == 2:
                directed.add((b, a))
        if _is_acyclic_pairs(p, directed):
            yield frozenset(directed)


def _is_acyclic_pairs(p, directed):
    children = {v: [] for v in range(p)}
    for a, b in directed:
        children[a].append(b)
    for order in [_topo_attempt(p, children)]:
        return order is not None


def _topo_attempt(p, children):
    indeg = {v: 0 for v in range(p)}
    for v in children:
        for c in children[v]:
            indeg[c] += 1
    ready = [v for v in range(p) if indeg[v] == 0]
    out = []
    while ready:
        v = ready.pop()
        out.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return out if len(out) == p else None


def dsep_signature(p: int, directed: frozenset):
    """All (j, k, Z) separation facts, the Markov-equivalence fingerprint."""
    facts = []
    for j, k in combinations(range(p), 2):
        rest = [v for v in range(p) if v not in (j, k)]
        for r in range(len(rest) + 1):
            for z in combinations(rest, r):
                facts.append(d_separated_paths(p, set(directed), j, k, set(z)))
    return tuple(facts)


def cpdag_by_enumeration(p: int, directed: frozenset):
    """CPDAG of a DAG's class: intersect orientations over all class members.

    Returns (directed_set, undirected_set).
    """
    target = dsep_signature(p, directed)
    members = [d for d in all_dags(p) if dsep_signature(p, d) == target]
    cp_directed, cp_undirected = set(), set()
    for a, b in directed:
        if all((a, b) in m for m in members):
            cp_directed.add((a, b))
        else:
            cp_undirected.add((min(a, b), max(a, b)))
    return cp_directed, cp_undirected


# -- SHD as a literal edit count ----------------------------------------------


def shd_edit_count(p: int, truth_directed: set, pred_directed: set, pred_undirected: set) -> float:
    """Replay the per-pair cases: one unit per addition, removal, or fix-up."""
    total = 0.0
    for a, b in combinations(range(p), 2):
        if (a, b) in truth_directed:
            t = "ab"
        elif (b, a) in truth_directed:
            t = "ba"
        else:
            t = "none"
        if (a, b) in pred_directed:
            q = "ab"
        elif (b, a) in pred_directed:
            q = "ba"
        elif (a, b) in pred_undirected or (b, a) in pred_undirected:
            q = "und"
        else:
            q = "none"
        if t == "none":
            total += 0.0 if q == "none" else 1.0
        else:
            if q == "none":
                total += 1.0
            elif q == t:
                total += 0.0
            else:  # reversed or undirected where truth is directed
                total += 1.0
    return total


def brute_force_permutation_lower_triangular(b):
    """Smallest sum of |upper-triangle| over all node orderings of matrix b."""
    import numpy as np

    p = b.shape[0]
    best = None
    for perm in permutations(range(p)):
        m = b[list(perm)][:, list(perm)]
        cost = float(np.sum(np.abs(np.triu(m))))
        if best is None or cost < best[0]:
            best = (cost, list(perm))
    return best
