"""Continuous DAG learning with the smooth acyclicity constraint.

Both variants minimize a fit loss plus sparsity penalties subject to
h(W) = 0 via the augmented Lagrangian, handling the L1 term by splitting
first-layer weights into nonnegative parts. The linear variant fits
X = XW directly; the MLP variant fits one sigmoid-hidden-layer network
per target node and induces edge weights as the L2 norm of the first
layer weights fanning out of each input.
"""

from __future__ import annotations

import numpy as np

from ..graph import Graph, GraphKind, WeightedAdjacency, _directed_part_acyclic
from ..numerics import AugLagConfig, acyclicity_h, augmented_lagrangian_minimize, sigmoid
from ..rng import Rng, derive_seed
from ..sem import Dataset
from . import AlgorithmDef, HyperparameterSpace, LearnOutcome, ParamSpec, register

H_TOL = 1e-8
RHO_MAX = 1e16


def _find_cycle(p: int, edges: set):
    """Some directed cycle as a list of edges, or None."""
    children = {j: sorted(k for (a, k) in edges if a == j) for j in range(p)}
    color = {j: 0 for j in range(p)}
    for root in range(p):
        if color[root]:
            continue
        path = [root]
        stack = [iter(children[root])]
        color[root] = 1
        while stack:
            advanced = False
            for nxt in stack[-1]:
                if color[nxt] == 1:
                    cycle_nodes = path[path.index(nxt):] + [nxt]
                    return list(zip(cycle_nodes[:-1], cycle_nodes[1:]))
                if color[nxt] == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append(iter(children[nxt]))
                    advanced = True
                    break
            if not advanced:
                color[path.pop()] = 2
                stack.pop()
    return None


def threshold_and_repair(weights: WeightedAdjacency, w_threshold: float):
    """Binary graph at the threshold; numerically cyclic results are repaired
    by dropping the weakest edge per remaining cycle (counted in diagnostics)."""
    p = weights.p
    w = weights.w
    edges = set()
    broken = 0
    for j in range(p):
        for k in range(j + 1, p):
            fwd = abs(w[j, k]) > w_threshold
            bwd = abs(w[k, j]) > w_threshold
            if fwd and bwd:  # numerical two-cycle: keep the dominant direction
                edges.add((j, k) if abs(w[j, k]) >= abs(w[k, j]) else (k, j))
                broken += 1
            elif fwd:
                edges.add((j, k))
            elif bwd:
                edges.add((k, j))
    while not _directed_part_acyclic(p, edges):
        cycle = _find_cycle(p, edges)
        weakest = min(cycle, key=lambda e: abs(w[e[0], e[1]]))
        edges.discard(weakest)
        broken += 1
    return Graph(p, frozenset(edges), frozenset(), GraphKind.DAG), broken


# -- linear variant -------------------------------------------------------------


def fit_linear(ds: Dataset, params: dict):
    lambda1 = params["lambda1"]
    max_iter = params["max_iter"]
    n, p = ds.n, ds.p
    x = ds.X - ds.X.mean(axis=0)  # l2 loss on centered data
    pp = p * p
    diag_mask = np.eye(p, dtype=bool).ravel()
    lower = np.zeros(2 * pp)
    upper = np.full(2 * pp, np.inf)
    upper[np.concatenate([diag_mask, diag_mask])] = 0.0  # pin the diagonal

    def unpack(theta):
        return (theta[:pp] - theta[pp:]).reshape(p, p)

    def objective(theta):
        w = unpack(theta)
        resid = x - x @ w
        loss = 0.5 / n * float(np.sum(resid * resid)) + lambda1 * float(theta.sum())
        g_w = (-1.0 / n) * (x.T @ resid)
        grad = np.concatenate([g_w.ravel() + lambda1, -g_w.ravel() + lambda1])
        return loss, grad

    def constraint(theta):
        h, g_h = acyclicity_h(unpack(theta))
        return h, np.concatenate([g_h.ravel(), -g_h.ravel()])

    config = AugLagConfig(
        h_tol=H_TOL, rho_max=RHO_MAX, inner_max_iter=max_iter, lower=lower, upper=upper
    )
    result = augmented_lagrangian_minimize(objective, constraint, np.zeros(2 * pp), config)
    weights = WeightedAdjacency(unpack(result.theta))
    diagnostics = {
        "h": result.h,
        "rho": result.rho,
        "converged": result.converged,
        "outer_iterations": result.outer_iterations,
        "inner_iterations": result.inner_iterations,
    }
    return weights, diagnostics


def finalize_thresholded(ds: Dataset, state, post_params: dict) -> LearnOutcome:
    weights, diagnostics = state
    graph, broken = threshold_and_repair(weights, post_params["w_threshold"])
    diagnostics = dict(diagnostics)
    if broken:
        diagnostics["cycles_broken"] = broken
    return LearnOutcome(graph=graph, weights=weights, diagnostics=diagnostics)


# -- MLP variant ------------------------------------------------------------------


class _MlpParams:
    """theta layout: [w1_pos, w1_neg, w2, b1, b2]; w1 is (input, target, unit)."""

    def __init__(self, p: int, hidden: int):
        self.p = p
        self.h = hidden
        self.n_w1 = p * p * hidden
        self.n_w2 = p * hidden
        self.size = 2 * self.n_w1 + 2 * self.n_w2 + p

    def unpack(self, theta):
        p, h = self.p, self.h
        pos = theta[: self.n_w1].reshape(p, p, h)
        neg = theta[self.n_w1 : 2 * self.n_w1].reshape(p, p, h)
        off = 2 * self.n_w1
        w2 = theta[off : off + self.n_w2].reshape(p, h)
        b1 = theta[off + self.n_w2 : off + 2 * self.n_w2].reshape(p, h)
        b2 = theta[off + 2 * self.n_w2 :]
        return pos, neg, w2, b1, b2

    def pack(self, pos, neg, w2, b1, b2):
        return np.concatenate([pos.ravel(), neg.ravel(), w2.ravel(), b1.ravel(), b2])

    def bounds(self):
        lower = np.concatenate(
            [np.zeros(2 * self.n_w1), np.full(2 * self.n_w2 + self.p, -np.inf)]
        )
        upper = np.full(self.size, np.inf)
        diag = np.zeros((self.p, self.p, self.h), dtype=bool)
        for j in range(self.p):
            diag[j, j, :] = True  # no self-input to a target's network
        upper[: self.n_w1][diag.ravel()] = 0.0
        upper[self.n_w1 : 2 * self.n_w1][diag.ravel()] = 0.0
        return lower, upper

    def init_theta(self, rng: Rng, scale: float = 0.1):
        p, h = self.p, self.h
        w1 = np.array(rng.uniform(p * p * h, -scale, scale)).reshape(p, p, h)
        for j in range(p):
            w1[j, j, :] = 0.0
        w2 = np.array(rng.uniform(p * h, -scale, scale)).reshape(p, h)
        b1 = np.array(rng.uniform(p * h, -scale, scale)).reshape(p, h)
        b2 = np.array(rng.uniform(p, -scale, scale))
        return self.pack(np.clip(w1, 0, None), np.clip(-w1, 0, None), w2, b1, b2)


def mlp_objective(theta, layout: _MlpParams, x: np.ndarray, lambda1: float, lambda2: float):
    """Summed per-node squared loss + L1 on first-layer splits + L2 on weights."""
    n, p = x.shape
    h = layout.h
    pos, neg, w2, b1, b2 = layout.unpack(theta)
    w1 = pos - neg
    act = (x @ w1.reshape(p, p * h)).reshape(n, p, h)
    act += b1[None, :, :]
    act = sigmoid(act)
    pred = np.einsum("njr,jr->nj", act, w2)
    pred += b2[None, :]
    pred -= x  # now the residual
    loss = 0.5 / n * float(np.sum(pred * pred))
    d_pred = pred
    d_pred /= n
    g_w2 = np.einsum("njr,nj->jr", act, d_pred)
    g_b2 = d_pred.sum(axis=0)
    # turn act's buffer into d_act = d_pred * w2 * act * (1 - act)
    act -= act * act
    act *= w2[None, :, :]
    act *= d_pred[:, :, None]
    g_w1 = (x.T @ act.reshape(n, p * h)).reshape(p, p, h)
    g_b1 = act.sum(axis=0)
    # penalties: L1 on the split first layer, L2 on both weight layers
    loss += lambda1 * float(theta[: 2 * layout.n_w1].sum())
    loss += 0.5 * lambda2 * (float(np.sum(w1 * w1)) + float(np.sum(w2 * w2)))
    g_pos = g_w1 + lambda2 * w1 + lambda1
    g_neg = -g_w1 - lambda2 * w1 + lambda1
    grad = layout.pack(g_pos, g_neg, g_w2 + lambda2 * w2, g_b1, g_b2)
    return loss, grad


def mlp_adjacency(theta, layout: _MlpParams) -> np.ndarray:
    pos, neg, _, _, _ = layout.unpack(theta)
    w1 = pos - neg
    return np.sqrt(np.sum(w1 * w1, axis=2))  # [input, target] fan-out norms


def mlp_constraint(theta, layout: _MlpParams):
    pos, neg, _, _, _ = layout.unpack(theta)
    w1 = pos - neg
    w_adj = np.sqrt(np.sum(w1 * w1, axis=2))
    h_val, g_adj = acyclicity_h(w_adj)
    ratio = np.divide(g_adj, w_adj, out=np.zeros_like(g_adj), where=w_adj > 0)
    g_w1 = ratio[:, :, None] * w1
    zeros2 = np.zeros(2 * layout.n_w2 + layout.p)
    grad = np.concatenate([g_w1.ravel(), -g_w1.ravel(), zeros2])
    return h_val, grad


def fit_mlp(ds: Dataset, params: dict):
    lambda1 = params["lambda1"]
    lambda2 = params["lambda2"]
    hidden = params["hidden_units"]
    n, p = ds.n, ds.p
    x = ds.X - ds.X.mean(axis=0)
    layout = _MlpParams(p, hidden)
    lower, upper = layout.bounds()
    theta0 = layout.init_theta(Rng(derive_seed("notears-mlp-init", p, hidden)))
    theta0 = np.clip(theta0, lower, upper)

    def objective(theta):
        return mlp_objective(theta, layout, x, lambda1, lambda2)

    def constraint(theta):
        return mlp_constraint(theta, layout)

    config = AugLagConfig(
        h_tol=H_TOL, rho_max=RHO_MAX, inner_max_iter=100, lower=lower, upper=upper
    )
    result = augmented_lagrangian_minimize(objective, constraint, theta0, config)
    weights = WeightedAdjacency(mlp_adjacency(result.theta, layout))
    diagnostics = {
        "h": result.h,
        "rho": result.rho,
        "converged": result.converged,
        "outer_iterations": result.outer_iterations,
        "inner_iterations": result.inner_iterations,
    }
    return weights, diagnostics


SPACE_LINEAR = HyperparameterSpace(
    algorithm="notears",
    params=(
        ParamSpec(
            name="lambda1",
            kind="float",
            grid=(0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5),
            default=0.1,
            sim_mean=0.2,
            stage="fit",
        ),
        ParamSpec(
            name="max_iter",
            kind="int",
            grid=(100, 1000),
            default=100,
            sim_mean=100,
            stage="fit",
        ),
        ParamSpec(
            name="w_threshold",
            kind="float",
            grid=(0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5),
            default=0.3,
            sim_mean=0.2,
            stage="post",
        ),
    ),
    fixed={"loss_type": "l2", "h_tol": H_TOL, "rho_max": RHO_MAX},
)

SPACE_MLP = HyperparameterSpace(
    algorithm="notears_mlp",
    params=(
        ParamSpec(
            name="lambda1",
            kind="float",
            grid=(0.001, 0.01, 0.1),
            default=0.01,
            sim_mean=0.01,
            stage="fit",
        ),
        ParamSpec(
            name="lambda2",
            kind="float",
            grid=(0.001, 0.01, 0.1),
            default=0.01,
            sim_mean=0.1,
            stage="fit",
        ),
        ParamSpec(
            name="w_threshold",
            kind="float",
            grid=(0.1, 0.3, 0.5),
            default=0.3,
            sim_mean=0.5,
            stage="post",
        ),
        ParamSpec(
            name="hidden_units",
            kind="int",
            grid=(8, 16, 32),
            default=10,
            sim_mean=16,
            stage="fit",
        ),
    ),
    fixed={"hidden_layers": 1, "max_iter": 100, "h_tol": H_TOL, "rho_max": RHO_MAX},
)

register(
    AlgorithmDef(name="notears", space=SPACE_LINEAR, fit=fit_linear, finalize=finalize_thresholded)
)
register(
    AlgorithmDef(name="notears_mlp", space=SPACE_MLP, fit=fit_mlp, finalize=finalize_thresholded)
)
