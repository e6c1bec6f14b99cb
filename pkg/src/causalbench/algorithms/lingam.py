"""ICA-based LiNGAM: unmix, align the diagonal, order, re-estimate, prune.

The unmixing matrix is row-permuted to put dominant entries on the
diagonal (minimum-cost matching on 1/|entry|), normalized to
B = I - D^-1 W', and a causal order is found by greedily eliminating the
row of smallest remaining absolute mass (root-most node first). Edge
weights are then re-estimated by least squares along that order, so the
output is always a DAG and thresholding prunes real structural zeros.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError
from ..graph import WeightedAdjacency
from ..numerics import fast_ica, minimum_cost_assignment
from ..sem import Dataset
from . import AlgorithmDef, HyperparameterSpace, LearnOutcome, ParamSpec, register


def _diagonal_assignment(w: np.ndarray) -> list[int]:
    """Row index to use for each column so the diagonal dominates.

    Optimal matching on cost 1/|w|; a greedy matching can paint itself
    into near-zero pivots whose normalized rows then explode.
    """
    cost = 1.0 / np.maximum(np.abs(w), 1e-300)
    return minimum_cost_assignment(cost)


def _greedy_causal_order(b: np.ndarray) -> list[int]:
    """Roots first: repeatedly take the row with least mass on remaining columns."""
    p = b.shape[0]
    remaining = list(range(p))
    order = []
    while remaining:
        best = min(
            remaining,
            key=lambda i: (sum(abs(b[i, k]) for k in remaining if k != i), i),
        )
        order.append(best)
        remaining.remove(best)
    return order


def _refit_by_order(x: np.ndarray, order: list[int]) -> np.ndarray:
    """Least-squares re-estimate of B along the causal order.

    The raw normalized unmixing rows carry ICA scale noise; regressing each
    node on its predecessors gives consistent coefficients, so thresholding
    prunes the structural zeros reliably.
    """
    p = x.shape[1]
    b = np.zeros((p, p))
    n = x.shape[0]
    for pos, node in enumerate(order):
        preds = order[:pos]
        if not preds:
            continue
        design = np.column_stack([np.ones(n), x[:, preds]])
        coef, _, _, _ = np.linalg.lstsq(design, x[:, node], rcond=None)
        b[node, preds] = coef[1:]
    return b


def fit(ds: Dataset, params: dict):
    max_iter = params["max_iter"]
    ica = fast_ica(ds.X, max_iter=max_iter)
    w = ica.unmixing
    row_for_col = _diagonal_assignment(w)
    w_perm = w[row_for_col, :]
    diag = np.diag(w_perm).copy()
    if np.any(np.abs(diag) < 1e-12):
        raise NumericalError("diagonal assignment produced a zero pivot")
    b = np.eye(ds.p) - w_perm / diag[:, None]
    np.fill_diagonal(b, 0.0)
    order = _greedy_causal_order(b)
    refit = _refit_by_order(ds.X, order)
    weights = WeightedAdjacency(refit.T)  # b[j,k] is k's effect on j, i.e. edge k->j
    diagnostics = {"converged": ica.converged, "ica_iterations": ica.iterations_used}
    return weights, diagnostics


def finalize(ds: Dataset, state, post_params: dict) -> LearnOutcome:
    weights, diagnostics = state
    graph = weights.to_binary(post_params["thresh"])
    return LearnOutcome(graph=graph, weights=weights, diagnostics=dict(diagnostics))


SPACE = HyperparameterSpace(
    algorithm="lingam",
    params=(
        ParamSpec(
            name="thresh",
            kind="float",
            grid=(0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5),
            default=0.3,
            sim_mean=0.5,
            stage="post",
        ),
        ParamSpec(
            name="max_iter",
            kind="int",
            grid=(100, 1000),
            default=1000,
            sim_mean=100,
            stage="fit",
        ),
    ),
    fixed={"contrast": "log-cosh"},
)

register(AlgorithmDef(name="lingam", space=SPACE, fit=fit, finalize=finalize))
